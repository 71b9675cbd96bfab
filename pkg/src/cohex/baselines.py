"""Comparison methods built on the same local explainers.

VINE clusters the importance vectors alone; REPID grows an axis-aligned tree
on the features whose splits minimise the within-leaf spread of importances.
Both compute importances once, with the whole dataset as context.
"""

from __future__ import annotations

import warnings

import numpy as np
from sklearn.cluster import KMeans

from .algorithm import CohortSolution, global_importances
from .clustering import ObjectiveParams, cohort_means, objective
from .explainers import gale_reweight
from .models import _best_split
from .regions import BoxRegion, MemberRegion


def _first_seen_labels(labels):
    """Renumber cluster ids in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.intp)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


def baseline_importances(model, ds, explainer, gale=False):
    W = global_importances(model, ds, explainer)
    if gale:
        W = gale_reweight(W, model.predict_label(ds.features), model.task)
    return W


def run_vine(model, ds, explainer, k, seed, gale=False, lam=1.0, importances=None) -> CohortSolution:
    """k-means (k-means++, 20 inits, 100 iterations) on importance vectors only."""
    if k > ds.n_samples:
        raise ValueError("k cannot exceed the number of samples")
    W = baseline_importances(model, ds, explainer, gale) if importances is None else np.asarray(importances)
    notes = ["cohort regions are membership lists; feature-space disjointness is not guaranteed"]
    distinct = np.unique(W, axis=0).shape[0]
    if k > distinct:
        warnings.warn(f"only {distinct} distinct importance vectors; reducing k from {k}", RuntimeWarning, stacklevel=2)
        notes.append(f"k reduced from {k} to {distinct}")
        k = distinct
    km = KMeans(n_clusters=k, init="k-means++", n_init=20, max_iter=100, random_state=int(seed) % (2 ** 32))
    labels = _first_seen_labels(km.fit_predict(W))
    k = int(labels.max()) + 1
    return CohortSolution(
        method="vine+gale" if gale else "vine",
        labels=labels,
        explanations=cohort_means(W, labels, k),
        importances=W,
        region=MemberRegion(ds.features, labels),
        objective=objective(W, labels, ObjectiveParams(lam, k)),
        config={"k": k, "gale": gale, "n_init": 20, "max_iter": 100},
        seed=seed,
        disjoint_in_feature_space="unverified",
        notes=notes,
    )


def _repid_partition(X, W, max_depth):
    """Leaf boxes and labels of the importance-variance partition tree."""
    n, d = X.shape
    labels = np.zeros(n, dtype=np.intp)
    lows, highs = [], []

    def grow(idx, depth, lo, hi):
        if depth < max_depth and idx.size >= 2:
            Wi = W[idx]
            parent = float(((Wi - Wi.mean(axis=0)) ** 2).sum())
            sse, f, thr = _best_split(X[idx], Wi, 1)
            if f >= 0 and parent - sse > 1e-12:
                mask = X[idx, f] <= thr
                hi_left, lo_right = hi.copy(), lo.copy()
                hi_left[f] = thr
                lo_right[f] = thr
                grow(idx[mask], depth + 1, lo, hi_left)
                grow(idx[~mask], depth + 1, lo_right, hi)
                return
        labels[idx] = len(lows)
        lows.append(lo)
        highs.append(hi)

    grow(np.arange(n), 0, np.full(d, -np.inf), np.full(d, np.inf))
    return labels, np.array(lows), np.array(highs)


def run_repid(model, ds, explainer, max_depth, gale=False, lam=1.0, k_star=None, importances=None) -> CohortSolution:
    """Greedy feature-space tree; splits minimise summed within-child variance
    of the importance vectors. Deterministic."""
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    return _repid_solution(model, ds, explainer, max_depth, gale, lam, k_star, importances)


def _repid_solution(model, ds, explainer, max_depth, gale, lam, k_star, importances):
    W = baseline_importances(model, ds, explainer, gale) if importances is None else np.asarray(importances)
    labels, lows, highs = _repid_partition(ds.features, W, max_depth)
    k = lows.shape[0]
    return CohortSolution(
        method="repid+gale" if gale else "repid",
        labels=labels,
        explanations=cohort_means(W, labels, k),
        importances=W,
        region=BoxRegion(lows, highs),
        objective=objective(W, labels, ObjectiveParams(lam, k_star or 2 ** max_depth)),
        config={"max_depth": max_depth, "gale": gale},
        disjoint_in_feature_space="true",
    )
