"""JSON and CSV serialisation of measures, plans and reports (schema ``v1``).

Report files hold ``{schema, kind, config_hash, header, payload}``. The
wall-clock timestamp lives only in ``header``, so two runs of the same
configuration give identical payloads.
"""

import csv
from datetime import datetime, timezone
import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np

from .exceptions import IOFailure
from .measure import DiscreteMeasure, GridSpec

SCHEMA = "v1"


def to_jsonable(obj):
    """Recursively convert numpy values, tuples and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    return obj


def dumps(obj):
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config):
    """Short content hash of a configuration mapping."""
    return hashlib.sha256(dumps(config).encode()).hexdigest()[:16]


def ensure_dir(path):
    """Create ``path`` and check that it is writable."""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise IOFailure(f"output directory {str(path)!r} is not writable: {exc}") from exc
    return path


def write_report(path, kind, payload, cfg_hash):
    doc = {
        "schema": SCHEMA,
        "kind": kind,
        "config_hash": cfg_hash,
        "header": {"created": datetime.now(timezone.utc).isoformat(timespec="seconds")},
        "payload": payload,
    }
    _write_text(path, dumps(doc))
    return path


def read_report(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {doc.get('schema')!r}")
    return doc


def write_csv(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as exc:
        raise IOFailure(str(exc)) from exc
    return path


def _write_text(path, text):
    try:
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def measure_to_dict(m, covariance=None, seed=None):
    """``{form, dim, atoms | grid, covariance}`` for a measure."""
    doc = {"form": m.form, "dim": m.dim}
    if m.form == "atoms":
        doc["atoms"] = {"points": m.points.tolist(), "masses": m.masses.tolist()}
    else:
        doc["grid"] = {"edges": [e.tolist() for e in m.grid.edges], "masses": m.masses.tolist()}
    doc["covariance"] = covariance.to_dict() if covariance is not None else None
    if seed is not None:
        doc["seed"] = int(seed)
    return doc


def measure_from_dict(doc):
    form = doc.get("form")
    if form == "atoms":
        return DiscreteMeasure.from_atoms(doc["atoms"]["points"], doc["atoms"]["masses"])
    if form == "grid":
        return DiscreteMeasure.from_grid(GridSpec(doc["grid"]["edges"]), np.array(doc["grid"]["masses"]))
    raise ValueError(f"unknown measure form {form!r}")


def save_measure(path, m, covariance=None, seed=None):
    _write_text(path, dumps(measure_to_dict(m, covariance, seed)))
    return path


def load_measure(path):
    try:
        with open(path) as fh:
            return measure_from_dict(json.load(fh))
    except OSError as exc:
        raise IOFailure(str(exc)) from exc


def plan_to_dict(plan):
    """``{entries: [[i, j, mass]], value, cost_kind, epsilon}``."""
    return {"entries": [[i, j, w] for i, j, w in plan.entries], "value": plan.value,
            "cost_kind": plan.cost_kind, "epsilon": plan.epsilon}


def write_plan_csv(path, plan):
    x, y = plan.source_points[plan.rows], plan.target_points[plan.cols]
    d = x.shape[1]
    header = ["i", "j", "mass"] + [f"x{k}" for k in range(d)] + [f"y{k}" for k in range(d)]
    rows = [[int(i), int(j), float(w), *map(float, xi), *map(float, yj)]
            for i, j, w, xi, yj in zip(plan.rows, plan.cols, plan.mass, x, y)]
    return write_csv(path, header, rows)
