"""File formats shared by the CLI and the evaluation pipelines.

* Model parameters: JSON with keys p, q, n, phi (list of row-major
  matrices), theta, sigma_eps.  Diagonalized parameters use kind
  "symcomm" with keys theta, basis, lam_phi, lam_sigma.
* Priors: JSON {"atoms": [...], "weights": [...]}.
* Portfolio constants: JSON {n, mu0, mu1, mu2, e, x0}.
* Sample paths: comma-separated, one time step per row, header row of
  series names, preceded by comment lines.

Every written file starts with comment lines carrying the tool version,
a digest of the resolved configuration, and the seed, so any output can
be traced back to its inputs.
"""

import hashlib
import json

import numpy as np

from .errors import ConfigError, ParseError
from .methods import DiscretePrior
from .portfolio import PortfolioSpec
from .varma import SymCommParams, VarmaParams

TOOL_NAME = "varmaove"
SCHEMA_VERSION = 1


def config_digest(obj):
    """Stable short digest of a JSON-serializable configuration."""
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def output_header(config_obj, seed):
    from . import __version__

    return [
        f"# {TOOL_NAME} {__version__}",
        f"# schema-version: {SCHEMA_VERSION}",
        f"# config-digest: {config_digest(config_obj)}",
        f"# seed: {seed}",
    ]


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc


def params_to_dict(params):
    if isinstance(params, SymCommParams):
        return {
            "kind": "symcomm",
            "theta": params.theta,
            "basis": params.basis.tolist(),
            "lam_phi": params.lam_phi.tolist(),
            "lam_sigma": params.lam_sigma.tolist(),
        }
    return {"kind": "varma", **params.to_dict()}


def params_from_dict(d):
    try:
        kind = d.get("kind", "varma")
        if kind == "symcomm":
            return SymCommParams(
                theta=d["theta"],
                basis=d["basis"],
                lam_phi=d["lam_phi"],
                lam_sigma=d["lam_sigma"],
            )
        if kind != "varma":
            raise ParseError(f"unknown parameter kind {kind!r}")
        return VarmaParams.from_dict(d)
    except KeyError as exc:
        raise ParseError(f"parameter document missing key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid parameter document: {exc}") from exc


def load_params(path):
    return params_from_dict(_load_json(path))


def save_params(path, params, seed="-"):
    doc = params_to_dict(params)
    with open(path, "w") as fh:
        for line in output_header(doc, seed):
            fh.write(line + "\n")
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _strip_comments(path):
    with open(path) as fh:
        return "".join(line for line in fh if not line.lstrip().startswith("#"))


def load_params_file(path):
    """Parameter JSON, tolerating leading comment header lines."""
    text = _strip_comments(path)
    try:
        return params_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc


def load_spec_file(path):
    text = _strip_comments(path)
    try:
        return PortfolioSpec.from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    except KeyError as exc:
        raise ParseError(f"portfolio spec missing key: {exc}") from exc


def load_prior_file(path):
    text = _strip_comments(path)
    try:
        doc = json.loads(text)
        atoms = [params_from_dict(a) for a in doc["atoms"]]
        weights = np.asarray(doc["weights"], dtype=float)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    except KeyError as exc:
        raise ParseError(f"prior document missing key: {exc}") from exc
    return DiscretePrior(atoms, weights)


def save_prior(path, prior, seed="-"):
    doc = {
        "atoms": [params_to_dict(a) for a in prior.atoms],
        "weights": prior.weights.tolist(),
    }
    with open(path, "w") as fh:
        for line in output_header({"atoms": len(prior.atoms)}, seed):
            fh.write(line + "\n")
        json.dump(doc, fh)
        fh.write("\n")


def write_sample(path, y, config_obj, seed):
    y = np.asarray(y, dtype=float)
    names = [f"y{i + 1}" for i in range(y.shape[1])]
    with open(path, "w") as fh:
        for line in output_header(config_obj, seed):
            fh.write(line + "\n")
        fh.write(",".join(names) + "\n")
        for row in y:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_sample(path):
    rows = []
    names = None
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if names is None:
                names = line.split(",")
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ParseError(f"row has {len(parts)} fields, expected {len(names)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ParseError(f"unparseable sample row: {line!r}") from exc
    if names is None or not rows:
        raise ParseError(f"sample file {path} has no data rows")
    return np.asarray(rows, dtype=float)


def write_decision(path, x, d2_diag, config_obj, seed):
    with open(path, "w") as fh:
        for line in output_header(config_obj, seed):
            fh.write(line + "\n")
        fh.write("component,x,d2_effective_diag\n")
        for i, (xi, di) in enumerate(zip(x, d2_diag), start=1):
            fh.write(f"{i},{xi:.17g},{di:.17g}\n")


def write_report(out_dir, report, config_obj, seed):
    """report.csv (flat rows) and summary.txt (per-method table)."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "report.csv")
    with open(report_path, "w") as fh:
        for line in output_header(config_obj, seed):
            fh.write(line + "\n")
        fh.write("method,oracle_index,mean_regret,mse,seconds\n")
        for method, o, regret, mse, secs in report.rows():
            mse_txt = f"{mse:.10g}" if np.isfinite(mse) else ""
            fh.write(f"{method},{o},{regret:.10g},{mse_txt},{secs:.6g}\n")
    summary_path = os.path.join(out_dir, "summary.txt")
    with open(summary_path, "w") as fh:
        for line in output_header(config_obj, seed):
            fh.write(line + "\n")
        for line in report.summary_lines():
            fh.write(line + "\n")
        fh.write(f"failures: {report.failures}\n")
    return report_path, summary_path


def write_trace(path, trace, config_obj, seed):
    with open(path, "w") as fh:
        for line in output_header(config_obj, seed):
            fh.write(line + "\n")
        fh.write("step,method,shift,cost\n")
        for step, method, shift, cost in trace.rows:
            fh.write(f"{step},{method},{shift},{cost:.10g}\n")


def load_config_file(path):
    text = _strip_comments(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    return doc
