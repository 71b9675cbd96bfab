"""Report serialization, content hashing and CSV emission."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .algorithm import CohortSolution
from .regions import BoxRegion, CentroidRegion, MemberRegion

# Wall-clock fields; dropped by canonicalize() before comparing runs.
VOLATILE_KEYS = frozenset({"T_mean_s", "elapsed_s"})

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> str:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def dataset_hash(ds) -> str:
    header = json.dumps({"columns": list(ds.columns), "shape": list(ds.features.shape)}, sort_keys=True).encode()
    body = np.ascontiguousarray(ds.features, dtype="<f8").tobytes()
    if ds.labels is not None:
        body += np.ascontiguousarray(ds.labels, dtype="<f8").tobytes()
    return fnv1a64(header + body)


def model_hash(model) -> str:
    return fnv1a64(model.to_json().encode())


def _clean(obj):
    """JSON-ready copy: numpy scalars/arrays to Python, infinities to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="\n")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def canonicalize(obj):
    """Drop wall-clock fields so that reruns compare byte-for-byte."""
    if isinstance(obj, dict):
        return {k: canonicalize(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [canonicalize(v) for v in obj]
    return obj


def canonical_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".json":
        return dumps(canonicalize(read_json(path))).encode()
    return path.read_bytes()


def solution_report(sol: CohortSolution, ds, *, config, data_info, model_info) -> dict:
    cohorts = []
    for j in range(sol.k):
        members = sol.members(j)
        entry = {"index": j, "size": int(members.size), "member_indices": members,
                 "explanation": sol.explanations[j]}
        if isinstance(sol.region, CentroidRegion):
            entry["centroid"] = sol.region.centroids[j]
            entry["centroid_index"] = None if sol.centroid_indices is None else int(sol.centroid_indices[j])
        elif isinstance(sol.region, BoxRegion):
            entry["box"] = {"low": sol.region.lows[j], "high": sol.region.highs[j]}
        cohorts.append(entry)
    stats = sol.stats or {}
    return {
        "method": sol.method,
        "seed": sol.seed,
        "config": config,
        "dataset": data_info,
        "model": model_info,
        "objective": sol.objective,
        "k": sol.k,
        "region_kind": sol.region.kind,
        "disjoint_in_feature_space": sol.disjoint_in_feature_space,
        "cohorts": cohorts,
        "labels": sol.labels,
        "per_sample_importances": sol.importances,
        "loss_trace": sol.loss_trace,
        "timing": {
            "n": stats.get("n_trials"),
            "m": stats.get("mean_iterations"),
            "k_mean": stats.get("mean_k"),
            "explainer_calls": stats.get("explainer_calls"),
            "T_mean_s": stats.get("T_mean_s"),
        },
        "notes": sol.notes,
        "method_config": sol.config,
    }


def _box(values, fill):
    return np.array([fill if v is None else v for v in values], dtype=np.float64)


def solution_from_report(report, ds) -> CohortSolution:
    labels = np.asarray(report["labels"], dtype=np.intp)
    cohorts = report["cohorts"]
    kind = report["region_kind"]
    if kind == "centroid":
        region = CentroidRegion([c["centroid"] for c in cohorts], ds.mean, ds.std)
        centroid_idx = np.array([c["centroid_index"] for c in cohorts], dtype=np.intp)
    elif kind == "box":
        region = BoxRegion([_box(c["box"]["low"], -np.inf) for c in cohorts],
                           [_box(c["box"]["high"], np.inf) for c in cohorts])
        centroid_idx = None
    else:
        region = MemberRegion(ds.features, labels)
        centroid_idx = None
    return CohortSolution(
        method=report["method"],
        labels=labels,
        explanations=np.array([c["explanation"] for c in cohorts], dtype=np.float64),
        importances=np.asarray(report["per_sample_importances"], dtype=np.float64),
        region=region,
        centroid_indices=centroid_idx,
        objective=report["objective"],
        loss_trace=report.get("loss_trace", []),
        config=report.get("method_config", {}),
        seed=report["seed"],
        disjoint_in_feature_space=report["disjoint_in_feature_space"],
        notes=report.get("notes", []),
    )


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, rows, columns=None):
    """Rows of dicts to CSV; ``.`` decimals, LF endings, union of keys as header."""
    if columns is None:
        columns = []
        for row in rows:
            columns.extend(k for k in row if k not in columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c, "")) for c in columns])
