"""Black-box model abstraction, tree learners and the randomized cohort wrapper.

Models expose ``predict_output(X)``: an ``(n, n_classes)`` probability matrix
for classification or an ``(n,)`` vector for regression. Explainers see nothing
else.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ._rng import hashed_uniform, make_rng
from .dataset import Dataset


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Prediction:
    """A single model output: exactly one of ``class_probs`` or ``value``."""

    class_probs: Optional[np.ndarray] = None
    value: Optional[float] = None

    def __post_init__(self):
        if (self.class_probs is None) == (self.value is None):
            raise ModelError("exactly one of class_probs or value must be set")
        if self.class_probs is not None:
            probs = np.asarray(self.class_probs, dtype=np.float64)
            if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
                raise ModelError("class_probs must be a probability vector")
            object.__setattr__(self, "class_probs", probs)

    @property
    def label(self):
        return int(np.argmax(self.class_probs)) if self.class_probs is not None else self.value


class BlackBoxModel:
    task = "classification"
    n_classes = 2

    @property
    def is_classifier(self) -> bool:
        return self.task == "classification"

    def predict_output(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_label(self, X) -> np.ndarray:
        out = self.predict_output(X)
        if self.is_classifier:
            return np.argmax(out, axis=1)
        return out

    def predict_one(self, x) -> Prediction:
        out = self.predict_output(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]
        if self.is_classifier:
            return Prediction(class_probs=out)
        return Prediction(value=float(out))

    def __call__(self, X):
        return self.predict_output(X)


class FunctionModel(BlackBoxModel):
    """Wrap a vectorised callable.

    For classification ``fn`` returns either class probabilities ``(n, c)`` or
    hard labels ``(n,)``; labels are converted to one-hot rows.
    """

    def __init__(self, fn: Callable, task="classification", n_classes=2):
        if task not in ("classification", "regression"):
            raise ModelError(f"unknown task {task!r}")
        self.fn = fn
        self.task = task
        self.n_classes = n_classes if task == "classification" else None

    def predict_output(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.asarray(self.fn(X), dtype=np.float64)
        if self.task == "regression":
            return out.reshape(X.shape[0])
        if out.ndim == 1:
            return np.eye(self.n_classes)[out.astype(np.intp)]
        return out


# --------------------------------------------------------------------------- trees

@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array representation; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_outputs)

    @property
    def n_nodes(self):
        return len(self.feature)

    def apply(self, X):
        """Leaf index for every row of ``X`` (``x[f] <= threshold`` goes left)."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def to_dict(self, task):
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                leaf = [float(v) for v in self.value[i]] if task == "classification" else float(self.value[i, 0])
                nodes.append({"leaf": leaf})
            else:
                nodes.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                              "left": int(self.left[i]), "right": int(self.right[i])})
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, d, task, n_outputs):
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.intp)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.intp)
        right = np.full(n, -1, dtype=np.intp)
        value = np.zeros((n, n_outputs))
        for i, node in enumerate(nodes):
            if "leaf" in node:
                value[i] = node["leaf"] if task == "classification" else [node["leaf"]]
            else:
                feature[i] = node["feature"]
                threshold[i] = node["threshold"]
                left[i] = node["left"]
                right[i] = node["right"]
        return cls(feature, threshold, left, right, value)


class TreeEnsemble(BlackBoxModel):
    """Averaged axis-aligned trees; a single CART is an ensemble of one."""

    def __init__(self, trees, task="classification", n_classes=None):
        self.trees = list(trees)
        self.task = task
        self.n_classes = n_classes if task == "classification" else None

    def predict_output(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        total = self.trees[0].predict(X)
        for tree in self.trees[1:]:
            total = total + tree.predict(X)
        out = total / len(self.trees)
        if self.task == "regression":
            return out[:, 0]
        return out / out.sum(axis=1, keepdims=True)

    def to_dict(self):
        d = {"task": self.task}
        if self.task == "classification":
            d["n_classes"] = self.n_classes
        d["trees"] = [t.to_dict(self.task) for t in self.trees]
        return d

    @classmethod
    def from_dict(cls, d):
        task = d["task"]
        n_out = d["n_classes"] if task == "classification" else 1
        trees = [Tree.from_dict(t, task, n_out) for t in d["trees"]]
        return cls(trees, task=task, n_classes=d.get("n_classes"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _infer_task(y):
    return "classification" if np.issubdtype(np.asarray(y).dtype, np.integer) else "regression"


def _best_split(X, targets, min_leaf):
    """Best (feature, threshold, impurity) over midpoint candidates.

    ``targets`` is ``(n, m)``: one-hot classes (Gini) or the value column
    (variance). Both criteria are expressed as weighted sums of squares so one
    cumulative-sum sweep serves both. Ties keep the lowest feature, then the
    lowest threshold.
    """
    n = X.shape[0]
    best = (np.inf, -1, 0.0)
    total = targets.sum(axis=0)
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cum = np.cumsum(targets[order], axis=0)
        cum_sq = np.cumsum((targets[order] ** 2).sum(axis=1))
        sizes = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (sizes >= min_leaf) & (n - sizes >= min_leaf)
        if not valid.any():
            continue
        left_sum = cum[:-1]
        right_sum = total - left_sum
        left_sq = cum_sq[:-1]
        right_sq = cum_sq[-1] - left_sq
        # sum of squared deviations in each child (equals n * Gini for one-hot targets)
        sse = (left_sq - (left_sum ** 2).sum(axis=1) / sizes) + (right_sq - (right_sum ** 2).sum(axis=1) / (n - sizes))
        sse = np.where(valid, sse, np.inf)
        i = int(np.argmin(sse))
        if sse[i] < best[0]:
            best = (float(sse[i]), f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _grow_tree(X, targets, max_depth, min_leaf, leaf_value):
    feature, threshold, left, right, value = [], [], [], [], []

    def node_sse(t):
        return float(((t - t.mean(axis=0)) ** 2).sum())

    def build(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(targets[idx]))
        if depth >= max_depth or len(idx) < 2 * min_leaf:
            return node
        parent = node_sse(targets[idx])
        if parent <= 1e-12:
            return node
        sse, f, thr = _best_split(X[idx], targets[idx], min_leaf)
        if f < 0 or sse >= parent - 1e-12:
            return node
        mask = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold), np.array(left, dtype=np.intp),
                np.array(right, dtype=np.intp), np.array(value))


def _fit_tree(X, y, task, n_classes, max_depth, min_leaf):
    if task == "classification":
        targets = np.eye(n_classes)[y.astype(np.intp)]
        return _grow_tree(X, targets, max_depth, min_leaf, lambda t: t.mean(axis=0))
    targets = y.astype(np.float64)[:, None]
    return _grow_tree(X, targets, max_depth, min_leaf, lambda t: t.mean(axis=0))


def _check_training(ds, max_depth, min_leaf, n_rows):
    if ds.labels is None:
        raise ModelError("training requires a labelled dataset")
    if max_depth < 1:
        raise ModelError("max_depth must be at least 1")
    if min_leaf < 1 or min_leaf > n_rows:
        raise ModelError("min_leaf must lie in [1, n_samples]")


def _class_count(ds, task, n_classes):
    if task != "classification":
        return None
    if n_classes is not None:
        return n_classes
    if ds.label_levels is not None:
        return len(ds.label_levels)
    return max(2, int(np.max(ds.labels)) + 1)


def train_cart(ds: Dataset, max_depth: int, min_leaf: int = 1, task=None, n_classes=None) -> TreeEnsemble:
    """Greedy CART: Gini impurity for classification, variance for regression."""
    _check_training(ds, max_depth, min_leaf, ds.n_samples)
    task = task or _infer_task(ds.labels)
    n_classes = _class_count(ds, task, n_classes)
    tree = _fit_tree(ds.features, ds.labels, task, n_classes, max_depth, min_leaf)
    return TreeEnsemble([tree], task=task, n_classes=n_classes)


def bootstrap_indices(n, n_trees, seed):
    """Row indices resampled for each tree of a forest."""
    return [make_rng(seed, t).integers(0, n, size=n) for t in range(n_trees)]


def train_forest(ds: Dataset, n_trees: int, max_depth: int, seed: int, min_leaf: int = 1,
                 task=None, n_classes=None) -> TreeEnsemble:
    _check_training(ds, max_depth, min_leaf, ds.n_samples)
    if n_trees < 1:
        raise ModelError("n_trees must be at least 1")
    task = task or _infer_task(ds.labels)
    n_classes = _class_count(ds, task, n_classes)
    trees = []
    for rows in bootstrap_indices(ds.n_samples, n_trees, seed):
        trees.append(_fit_tree(ds.features[rows], ds.labels[rows], task, n_classes, max_depth, min_leaf))
    return TreeEnsemble(trees, task=task, n_classes=n_classes)


# --------------------------------------------------------------------------- randomized wrapper

class RandomizedCohortModel(BlackBoxModel):
    """Agrees with ``base`` inside a cohort region and is noisy elsewhere.

    Outside the region each query is answered by ``base`` with probability
    ``1 - p`` and by a random draw otherwise: a uniformly random class, or a
    value from ``label_pool`` for regression. Draws are keyed by
    ``(stream_seed, query counter)``; :meth:`reset` rewinds the counter so a
    session can be replayed exactly.
    """

    def __init__(self, base: BlackBoxModel, region, cohort: int, p: float, label_pool, stream_seed: int):
        if not 0.0 <= p <= 1.0:
            raise ModelError("p must lie in [0, 1]")
        pool = np.asarray(label_pool, dtype=np.float64).ravel()
        if pool.size == 0:
            raise ModelError("label_pool must be non-empty")
        self.base = base
        self.region = region
        self.cohort = cohort
        self.p = float(p)
        self.label_pool = pool
        self.stream_seed = int(stream_seed)
        self.task = base.task
        self.n_classes = base.n_classes
        self.counter = 0

    def reset(self):
        self.counter = 0

    def predict_output(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = self.base.predict_output(X)
        n = X.shape[0]
        counters = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        if self.p == 0.0:
            return out
        outside = ~self.region.contains(X, self.cohort)
        swap = outside & (hashed_uniform(self.stream_seed, counters, 0) < self.p)
        if not swap.any():
            return out
        u = hashed_uniform(self.stream_seed, counters[swap], 1)
        out = out.copy()
        if self.is_classifier:
            cls = np.minimum((u * self.n_classes).astype(np.intp), self.n_classes - 1)
            out[swap] = np.eye(self.n_classes)[cls]
        else:
            pick = np.minimum((u * self.label_pool.size).astype(np.intp), self.label_pool.size - 1)
            out[swap] = self.label_pool[pick]
        return out


def make_randomized(base, region, cohort, p, label_pool, stream_seed) -> RandomizedCohortModel:
    return RandomizedCohortModel(base, region, cohort, p, label_pool, stream_seed)
