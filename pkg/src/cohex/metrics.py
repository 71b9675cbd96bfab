"""Evaluation criteria for cohort explanations.

* generalizability: within-cohort spread of local importances,
* locality: change of each cohort's explanation when the model is randomized
  outside that cohort,
* cohort stability: mean ARI between repeated runs,
* importance stability: change of a cohort's explanation when one outside
  sample joins it,
* disjointness of the cohort regions in feature space.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ._rng import derive_seed, make_rng
from .clustering import generalizability_loss
from .models import make_randomized


def eval_generalizability(sol) -> float:
    return generalizability_loss(sol.importances, sol.labels)


def _p_key(p):
    return int(round(float(p) * 1_000_000))


def _mean_stderr(values):
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


def eval_locality(model, ds, method, sol, p_grid, repeats, seed):
    """Expected sum over cohorts of ``||e_j - e~_j||^2`` for each ``p``.

    ``e~_j`` re-runs the method's explanation step on cohort ``j``'s fixed
    members against a model randomized outside that cohort's region.
    Returns ``[(p, mean, stderr), ...]``.
    """
    if repeats < 2:
        raise ValueError("repeats must be at least 2")
    if len(p_grid) == 0:
        raise ValueError("p_grid must not be empty")
    explainer = method.make_explainer()
    if ds.labels is not None and not model.is_classifier:
        pool = ds.labels
    else:
        pool = model.predict_output(ds.features) if not model.is_classifier else np.zeros(1)
    results = []
    for p in p_grid:
        totals = []
        for r in range(repeats):
            total = 0.0
            for j in range(sol.k):
                members = sol.members(j)
                wrapped = make_randomized(model, sol.region, j, p, pool, derive_seed(seed, _p_key(p), r, j))
                e_tilde = method.fixed_cohort_explanation(wrapped, ds, members, explainer)
                total += float(((sol.explanations[j] - e_tilde) ** 2).sum())
            totals.append(total)
        mean, err = _mean_stderr(totals)
        results.append((float(p), mean, err))
    return results


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    Two all-singleton partitions, or two single-cluster partitions, score 1.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("assignments must have equal length")
    n = a.size
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        x = np.asarray(x, dtype=np.float64)
        return float((x * (x - 1) / 2).sum())

    index = pairs(table)
    rows = pairs(table.sum(axis=1))
    cols = pairs(table.sum(axis=0))
    total = n * (n - 1) / 2
    if total == 0:
        return 1.0
    expected = rows * cols / total
    max_index = 0.5 * (rows + cols)
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def cohort_stability_aris(runner: Callable[[int], np.ndarray], t, seed):
    """ARI of runs 2..t against run 1; run ``i`` uses a seed derived from (seed, i)."""
    if t < 2:
        raise ValueError("t must be at least 2")
    runs = [np.asarray(runner(derive_seed(seed, i))) for i in range(1, t + 1)]
    return [adjusted_rand_index(runs[0], other) for other in runs[1:]]


def eval_cohort_stability(runner, ds, t, seed) -> float:
    """``(1/t) * sum_{i=2..t} ARI(run_1, run_i)``.

    The normalisation by ``t`` over ``t - 1`` terms means a perfectly stable
    method scores ``(t - 1) / t``; see :func:`cohort_stability_both` for the
    variant normalised by ``t - 1``.
    """
    aris = cohort_stability_aris(runner, t, seed)
    return sum(aris) / t


def cohort_stability_both(runner, t, seed):
    aris = cohort_stability_aris(runner, t, seed)
    return sum(aris) / t, sum(aris) / (t - 1)


def eval_importance_stability(model, ds, method, sol, draws, seed):
    """Expected ``sum_j ||e_j - e_{X_j + x}||^2`` with ``x`` drawn from outside
    each cohort. Returns ``(mean, stderr, flagged_cohorts)``; a cohort covering
    the whole dataset contributes 0 and is flagged."""
    if draws < 2:
        raise ValueError("draws must be at least 2")
    explainer = method.make_explainer()
    n = ds.n_samples
    flagged = []
    outside = []
    for j in range(sol.k):
        rest = np.setdiff1d(np.arange(n), sol.members(j))
        outside.append(rest)
        if rest.size == 0:
            flagged.append(j)
    totals = []
    for r in range(draws):
        rng = make_rng(seed, r)
        total = 0.0
        for j in range(sol.k):
            if outside[j].size == 0:
                continue
            x = outside[j][rng.integers(outside[j].size)]
            members = np.append(sol.members(j), x)
            e_aug = method.augmented_cohort_explanation(model, ds, members, explainer)
            total += float(((sol.explanations[j] - e_aug) ** 2).sum())
        totals.append(total)
    mean, err = _mean_stderr(totals)
    return mean, err, flagged


def verify_disjoint(sol, ds) -> bool:
    """Whether the cohorts occupy disjoint feature-space regions.

    Centroid and box solutions are disjoint by construction; the check
    confirms every sample sits in the region of its own cohort. Membership
    solutions pass only if every sample is closest to its own cohort's mean
    (standardized features).
    """
    if sol.k <= 1:
        return True
    kind = sol.region.kind
    if kind in ("centroid", "box"):
        return bool(np.array_equal(sol.region.locate(ds.features), sol.labels))
    Z = ds.standardize(ds.features)
    means = np.stack([Z[sol.labels == j].mean(axis=0) for j in range(sol.k)])
    d2 = ((Z[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return bool(np.array_equal(np.argmin(d2, axis=1), sol.labels))


@dataclass
class MetricReport:
    method: str
    clustering_penalty: float
    generalizability: float
    k: int
    disjoint: bool
    locality: list = field(default_factory=list)
    cohort_stability: float = float("nan")
    cohort_stability_tm1: float = float("nan")
    importance_stability: float = float("nan")
    importance_stability_stderr: float = float("nan")
    runs: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["locality"] = [{"p": p, "value": v, "stderr": s} for p, v, s in self.locality]
        return d

    def csv_row(self):
        row = {
            "method": self.method,
            "clustering_penalty": self.clustering_penalty,
            "generalizability": self.generalizability,
            "k": self.k,
            "disjoint": self.disjoint,
        }
        for p, v, s in self.locality:
            row[f"locality_p{p:g}"] = v
            row[f"locality_p{p:g}_stderr"] = s
        row["cohort_stability"] = self.cohort_stability
        row["cohort_stability_tm1"] = self.cohort_stability_tm1
        row["importance_stability"] = self.importance_stability
        row["importance_stability_stderr"] = self.importance_stability_stderr
        return row


def evaluate(model, ds, method, sol, p_grid=(0.1, 0.5, 1.0), repeats=5, t=5, draws=20, seed=0,
             stability=True) -> MetricReport:
    report = MetricReport(
        method=method.label,
        clustering_penalty=float(sol.objective),
        generalizability=eval_generalizability(sol),
        k=sol.k,
        disjoint=verify_disjoint(sol, ds),
        locality=eval_locality(model, ds, method, sol, p_grid, repeats, derive_seed(seed, 1)),
        runs={"p_grid": list(p_grid), "repeats": repeats, "t": t, "draws": draws, "seed": seed},
    )
    if stability:
        runner = lambda s: method.run(model, ds, s).labels  # noqa: E731
        report.cohort_stability, report.cohort_stability_tm1 = cohort_stability_both(runner, t, derive_seed(seed, 2))
    mean, err, _ = eval_importance_stability(model, ds, method, sol, draws, derive_seed(seed, 3))
    report.importance_stability = mean
    report.importance_stability_stderr = err
    return report
