"""Centroid-defined cohorts, the cohort objective and the SRIDHCR solver.

Cohorts are Voronoi cells of representative samples under standardized
Euclidean distance. The objective trades the within-cohort spread of local
importances against a penalty on exceeding the desired number of cohorts::

    loss = (1/n) sum_j sum_{x in X_j} ||w_x - mean_j||^2
           + lam * sqrt(max((k - k_star) / n, 0))
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._rng import make_rng
from .dataset import Dataset
from .regions import CentroidRegion


@dataclass(frozen=True)
class ObjectiveParams:
    lam: float = 1.0
    k_star: int = 4

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.k_star < 1:
            raise ValueError("k_star must be at least 1")


@dataclass(eq=False)
class CohortAssignment:
    """Centroid set and the induced partition (cohorts numbered from 0)."""

    centroids: np.ndarray
    labels: np.ndarray
    centroid_indices: Optional[np.ndarray] = None
    objective: float = float("nan")
    history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.centroids)

    def members(self, j) -> np.ndarray:
        return np.flatnonzero(self.labels == j)


def _nearest(dist_to_centroids):
    # argmin returns the first minimum, i.e. the lowest centroid position on ties
    return np.argmin(dist_to_centroids, axis=1)


def assign(centroids, ds: Dataset) -> CohortAssignment:
    """Nearest-centroid partition; centroids whose cell is empty are dropped."""
    C = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if C.shape[0] < 1:
        raise ValueError("at least one centroid is required")
    labels = CentroidRegion(C, ds.mean, ds.std).locate(ds.features)
    used = np.unique(labels)
    if used.size < C.shape[0]:
        remap = -np.ones(C.shape[0], dtype=np.intp)
        remap[used] = np.arange(used.size)
        C = C[used]
        labels = remap[labels]
    return CohortAssignment(centroids=C, labels=labels)


def cohort_means(importances, labels, k=None) -> np.ndarray:
    W = np.asarray(importances, dtype=np.float64)
    labels = np.asarray(labels)
    k = int(labels.max()) + 1 if k is None else k
    return np.stack([W[labels == j].mean(axis=0) for j in range(k)])


def generalizability_loss(importances, labels) -> float:
    """Mean squared distance of local importances to their cohort mean."""
    W = np.asarray(importances, dtype=np.float64)
    labels = np.asarray(getattr(labels, "labels", labels))
    total = 0.0
    for j in np.unique(labels):
        Wj = W[labels == j]
        total += float(((Wj - Wj.mean(axis=0)) ** 2).sum())
    return total / W.shape[0]


def conciseness_penalty(k, params: ObjectiveParams, n) -> float:
    return params.lam * math.sqrt(max((k - params.k_star) / n, 0.0))


def objective(importances, labels, params: ObjectiveParams, n=None) -> float:
    labels = np.asarray(getattr(labels, "labels", labels))
    n = len(labels) if n is None else n
    if n <= 0:
        raise ValueError("objective needs a non-empty dataset")
    k = np.unique(labels).size
    return generalizability_loss(importances, labels) + conciseness_penalty(k, params, n)


def pairwise_distances(ds: Dataset) -> np.ndarray:
    """Squared standardized distances, computed exactly as CentroidRegion does
    so that ties resolve identically on both paths."""
    Z = ds.standardize(ds.features)
    return ((Z[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)


class _State:
    """Representative-based partition over a fixed distance matrix."""

    def __init__(self, D, W, params, centroids):
        self.D = D
        self.W = W
        self.params = params
        self.n = D.shape[0]
        self.total_sq = float((W ** 2).sum())
        self.set_centroids(np.asarray(centroids, dtype=np.intp))

    def set_centroids(self, centroids):
        C = np.sort(np.unique(centroids))
        labels = _nearest(self.D[:, C])
        used = np.unique(labels)
        if used.size < C.size:  # prune centroids that own no sample
            C = C[used]
            labels = _nearest(self.D[:, C])
        self.C = C
        self.labels = labels
        self.value = objective(self.W, labels, self.params, self.n)

    def insertion_values(self):
        """Objective after inserting each non-centroid sample, computed jointly."""
        D, W, n = self.D, self.W, self.n
        C, labels = self.C, self.labels
        k, d = C.size, W.shape[1]
        cand = np.setdiff1d(np.arange(n), C, assume_unique=True)
        if cand.size == 0:
            return cand, np.empty(0)
        own = C[labels]
        best = D[np.arange(n), own]
        Dc = D[:, cand].T  # (n_cand, n)
        movers = (Dc < best[None, :]) | ((Dc == best[None, :]) & (cand[:, None] < own[None, :]))
        Mf = movers.astype(np.float64)
        G = np.zeros((n, k))
        G[np.arange(n), labels] = 1.0
        counts = G.sum(axis=0)
        sums = G.T @ W
        GW = (G[:, :, None] * W[:, None, :]).reshape(n, k * d)
        left_counts = counts[None, :] - Mf @ G
        left_sums = sums[None, :, :] - (Mf @ GW).reshape(-1, k, d)
        new_counts = Mf.sum(axis=1)
        new_sums = Mf @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            kept = np.where(left_counts > 0, (left_sums ** 2).sum(axis=2) / left_counts, 0.0).sum(axis=1)
            fresh = np.where(new_counts > 0, (new_sums ** 2).sum(axis=1) / new_counts, 0.0)
        sse = self.total_sq - kept - fresh
        k_new = (left_counts > 0).sum(axis=1) + (new_counts > 0)
        pen = self.params.lam * np.sqrt(np.maximum((k_new - self.params.k_star) / n, 0.0))
        return cand, np.maximum(sse, 0.0) / n + pen

    def deletion_values(self):
        if self.C.size <= 1:
            return self.C[:0], np.empty(0)
        vals = np.empty(self.C.size)
        for i in range(self.C.size):
            rest = np.delete(self.C, i)
            vals[i] = objective(self.W, _nearest(self.D[:, rest]), self.params, self.n)
        return self.C.copy(), vals


def _descend(state: _State, tol=1e-12):
    """Steepest descent over single insertions/deletions; returns the trace."""
    trace = [state.value]
    while True:
        ins_c, ins_v = state.insertion_values()
        del_c, del_v = state.deletion_values()
        best_ins = int(np.argmin(ins_v)) if ins_v.size else -1
        best_del = int(np.argmin(del_v)) if del_v.size else -1
        v_ins = ins_v[best_ins] if best_ins >= 0 else np.inf
        v_del = del_v[best_del] if best_del >= 0 else np.inf
        if min(v_ins, v_del) >= state.value - tol:
            return trace
        previous = (state.C, state.labels, state.value)
        if v_ins <= v_del:
            state.set_centroids(np.append(state.C, ins_c[best_ins]))
        else:
            state.set_centroids(np.delete(state.C, best_del))
        if state.value >= previous[2] - tol:  # guard against drift in the batched evaluation
            state.C, state.labels, state.value = previous
            return trace
        trace.append(state.value)


def sridhcr(ds: Dataset, importances, params: ObjectiveParams, seed: int, restarts: int = 5,
            init: Optional[Sequence[int]] = None, distances=None) -> CohortAssignment:
    """Single-representative insertion/deletion steepest-descent hill climbing.

    Each restart starts from ``k_star`` samples drawn without replacement (the
    first restart starts from ``init`` when given) and descends until no single
    move lowers the objective by more than 1e-12. The best restart wins, ties
    going to the earliest. Importances are held fixed throughout.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    W = np.asarray(importances, dtype=np.float64)
    D = pairwise_distances(ds) if distances is None else distances
    n = ds.n_samples
    best_state, history = None, []
    for r in range(restarts):
        if r == 0 and init is not None:
            start = np.asarray(init, dtype=np.intp)
        else:
            start = make_rng(seed, r).choice(n, size=min(params.k_star, n), replace=False)
        state = _State(D, W, params, start)
        history.append(_descend(state))
        if best_state is None or state.value < best_state.value:
            best_state = state
    C = best_state.C
    return CohortAssignment(centroids=ds.features[C], labels=best_state.labels, centroid_indices=C,
                            objective=best_state.value, history=history)
