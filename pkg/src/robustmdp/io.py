"""JSON and CSV serialization for instances, evaluations, run logs and RTD output.

Floats are written with Python's shortest round-trip representation, so a
dump followed by a load reproduces every double bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .ambiguity import AmbiguitySpec, Contamination, L1Ball, Scenarios, Singleton
from .errors import ValidationError
from .instances import InstanceBundle
from .mdp import TabularMDP
from .solvers import CSV_COLUMNS, RunLog


def _clean(obj):
    """Recursively convert numpy objects to JSON-ready Python values; non-finite floats become None."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"


# -- ambiguity ----------------------------------------------------------------


def _pair_to_dict(ps) -> dict:
    if isinstance(ps, Singleton):
        return {"kind": "singleton"}
    if isinstance(ps, Scenarios):
        return {"kind": "scenarios", "rows": ps.rows}
    if isinstance(ps, Contamination):
        d = {"kind": "contamination", "epsilon": ps.epsilon}
        if not ps.full:
            d["q_set"] = ps.q_rows
        return d
    if isinstance(ps, L1Ball):
        return {"kind": "l1ball", "radius": ps.radius}
    raise ValidationError(f"cannot serialize {ps!r}")


def _pair_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "singleton":
        return Singleton()
    if kind == "scenarios":
        return Scenarios(np.array(d["rows"], dtype=float))
    if kind == "contamination":
        q = d.get("q_set")
        return Contamination(float(d["epsilon"]), None if q is None else np.array(q, dtype=float))
    if kind == "l1ball":
        return L1Ball(float(d["radius"]))
    raise ValidationError(f"unknown ambiguity kind {kind!r}")


def ambiguity_to_dict(spec: AmbiguitySpec) -> dict:
    if spec._uniform is not None:
        return _pair_to_dict(spec._uniform)
    if spec._scenario_kernels is not None:
        return {"kind": "scenarios", "kernels": spec._scenario_kernels}
    return {"pairs": [[_pair_to_dict(ps) for ps in row] for row in spec.pairs]}


def ambiguity_from_dict(d: dict, nominal: np.ndarray) -> AmbiguitySpec:
    if "pairs" in d:
        return AmbiguitySpec(nominal, [[_pair_from_dict(x) for x in row] for row in d["pairs"]])
    if d.get("kind") == "scenarios":
        if "kernels" not in d:
            raise ValidationError("uniform scenarios block needs a 'kernels' list")
        return AmbiguitySpec.from_scenario_kernels(nominal, np.array(d["kernels"], dtype=float))
    return AmbiguitySpec.uniform(nominal, _pair_from_dict(d))


# -- instances ------------------------------------------------------------------


def mdp_to_dict(mdp: TabularMDP) -> dict:
    return {"n_states": mdp.n_states, "n_actions": mdp.n_actions, "gamma": mdp.gamma,
            "cost": mdp.cost, "nominal": mdp.nominal}


def mdp_from_dict(d: dict) -> TabularMDP:
    mdp = TabularMDP(np.array(d["cost"], dtype=float), float(d["gamma"]),
                     np.array(d["nominal"], dtype=float))
    if mdp.n_states != d.get("n_states", mdp.n_states) or mdp.n_actions != d.get("n_actions", mdp.n_actions):
        raise ValidationError("declared sizes do not match the tables")
    return mdp


def bundle_to_dict(bundle: InstanceBundle) -> dict:
    d = mdp_to_dict(bundle.mdp)
    d["ambiguity"] = ambiguity_to_dict(bundle.spec)
    d["metadata"] = {"name": bundle.name, "params": bundle.params, "notes": bundle.notes}
    return d


def bundle_from_dict(d: dict) -> InstanceBundle:
    mdp = mdp_from_dict(d)
    amb = d.get("ambiguity", {"kind": "singleton"})
    spec = ambiguity_from_dict(amb, mdp.nominal)
    meta = d.get("metadata", {})
    return InstanceBundle(mdp=mdp, spec=spec, name=meta.get("name", "instance"),
                          params=meta.get("params", {}), notes=meta.get("notes", ""))


def save_bundle(bundle: InstanceBundle, path) -> None:
    Path(path).write_text(dumps(bundle_to_dict(bundle)))


def load_bundle(path) -> InstanceBundle:
    return bundle_from_dict(json.loads(Path(path).read_text()))


def load_vector(path) -> np.ndarray:
    """Read a JSON list (or {"weights": [...]}/{"probs": [...]}) as an array."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict):
        for key in ("weights", "probs", "policy", "rho"):
            if key in data:
                data = data[key]
                break
    return np.array(data, dtype=float)


# -- run logs -------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def runlog_csv(log: RunLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in log.records:
        w.writerow([_fmt(r.get(c, math.nan)) for c in CSV_COLUMNS])
    return buf.getvalue()


def runlog_dict(log: RunLog) -> dict:
    return {
        "algo": log.algo,
        "stop_reason": log.stop_reason,
        "f_star": log.f_star,
        "M_hat": log.M_hat,
        "R": log.R,
        "meta": log.meta,
        "policy": log.policy,
        "records": log.records,
    }


def write_runlog(log: RunLog, prefix) -> tuple:
    prefix = str(prefix)
    csv_path, json_path = prefix + ".csv", prefix + ".json"
    Path(csv_path).write_text(runlog_csv(log))
    Path(json_path).write_text(dumps(runlog_dict(log)))
    return csv_path, json_path


def trace_csv(steps, errors) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("step", "error"))
    for s, e in zip(steps, errors):
        w.writerow((int(s), repr(float(e))))
    return buf.getvalue()
