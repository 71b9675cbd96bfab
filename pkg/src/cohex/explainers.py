"""Data-driven local feature-importance methods.

Every explainer computes ``omega(M, context, x)``: the importance of each
feature for sample ``x`` under model ``M`` when only the rows of ``context``
are visible. What the context contributes differs per method:

* counterfactual: per-feature perturbation ranges,
* linear surrogate: per-feature sampling scale,
* Shapley: background distribution for absent features.

All methods are deterministic in ``(M, context, x, seed)`` and insensitive to
the order of context rows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ._rng import make_rng
from .dataset import Dataset


class ExplainerError(ValueError):
    pass


@dataclass(frozen=True)
class ExplainerConfig:
    method: str = "counterfactual"
    n_perturbations: int = 500
    kernel_width: Optional[float] = None
    shapley_samples: int = 200
    exact_shapley_threshold: int = 10
    resolution: int = 200
    regression_threshold: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in EXPLAINERS:
            raise ExplainerError(f"unknown explainer {self.method!r}; choose from {sorted(EXPLAINERS)}")
        for name in ("n_perturbations", "shapley_samples", "exact_shapley_threshold", "resolution"):
            if getattr(self, name) < 1:
                raise ExplainerError(f"{name} must be at least 1")
        if self.kernel_width is not None and self.kernel_width <= 0:
            raise ExplainerError("kernel_width must be positive")

    def to_dict(self):
        return asdict(self)


class Explainer:
    """Base class; subclasses implement :meth:`explain_batch`."""

    name = "base"
    #: False for explainers whose output does not depend on the context rows.
    uses_context = True

    def explain(self, model, context: Dataset, x) -> np.ndarray:
        return self.explain_batch(model, context, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]

    def explain_batch(self, model, context: Dataset, points) -> np.ndarray:
        raise NotImplementedError


def _target_output(model, X, classes):
    """Model output tracked by the surrogate and Shapley explainers."""
    out = model.predict_output(X)
    if model.is_classifier:
        return out[np.arange(out.shape[0]), classes]
    return out


class CounterfactualExplainer(Explainer):
    """Importance from the smallest single-feature change that flips the output.

    Candidate perturbations are multiples of ``range / resolution`` within the
    context's observed range of the feature. A flip found ``m`` steps away
    scores ``1 - m / resolution``; no flip scores 0.

    For regression a flip is an output change larger than
    ``regression_threshold`` (default: half the stddev of the model's output
    over the context).
    """

    name = "counterfactual"

    def __init__(self, resolution=200, regression_threshold=None):
        self.resolution = int(resolution)
        self.regression_threshold = regression_threshold

    def explain_batch(self, model, context, points):
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m, d = P.shape
        lo = context.features.min(axis=0)
        hi = context.features.max(axis=0)
        span = hi - lo
        if model.is_classifier:
            base = model.predict_label(P)
        else:
            base = model.predict_output(P)
            thr = self.regression_threshold
            if thr is None:
                thr = 0.5 * float(np.std(model.predict_output(context.features)))
        res = self.resolution
        steps = np.arange(1, res + 1)
        scores = np.zeros((m, d))
        for f in range(d):
            if span[f] <= 0:
                continue
            offsets = steps * span[f] / res
            cand = P[:, f:f + 1] + np.concatenate([offsets, -offsets])[None, :]
            tol = 1e-9 * span[f]
            valid = (cand >= lo[f] - tol) & (cand <= hi[f] + tol)
            Q = np.repeat(P, 2 * res, axis=0)
            Q[:, f] = cand.ravel()
            if model.is_classifier:
                changed = model.predict_label(Q).reshape(m, 2 * res) != base[:, None]
            else:
                changed = np.abs(model.predict_output(Q).reshape(m, 2 * res) - base[:, None]) > thr
            flips = changed & valid
            step_idx = np.tile(steps, 2)[None, :]
            nearest = np.where(flips, step_idx, res + 1).min(axis=1)
            found = nearest <= res
            scores[found, f] = 1.0 - nearest[found] / res
        return scores


class LinearSurrogateExplainer(Explainer):
    """Locally weighted linear fit around ``x``.

    Perturbations are Gaussian with per-feature scale equal to the context's
    stddev (falling back to the dataset stddev for constant columns, which
    includes singleton contexts). Importance is the absolute coefficient per
    unit of that scale.
    """

    name = "linear_surrogate"

    def __init__(self, n_perturbations=500, kernel_width=None, seed=0, ridge=1e-6):
        self.n_perturbations = int(n_perturbations)
        self.kernel_width = kernel_width
        self.seed = seed
        self.ridge = ridge
        self.ill_conditioned = False

    def explain_batch(self, model, context, points):
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m, d = P.shape
        if self.n_perturbations < d + 1:
            raise ExplainerError("n_perturbations must be at least n_features + 1")
        scale = context.features.std(axis=0)
        scale = np.where(scale > 0, scale, context.std)
        width = self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(d)
        Z = make_rng(self.seed).standard_normal((self.n_perturbations, d))
        weights = np.exp(-(Z ** 2).sum(axis=1) / width ** 2)
        A = np.hstack([np.ones((self.n_perturbations, 1)), Z])
        gram = A.T @ (weights[:, None] * A)
        gram[1:, 1:] += self.ridge * np.eye(d)
        cond = np.linalg.cond(gram)
        self.ill_conditioned = bool(cond > 1e8)
        if self.ill_conditioned:
            warnings.warn(f"surrogate design is ill-conditioned (cond={cond:.3g})", RuntimeWarning, stacklevel=2)

        classes = model.predict_label(P) if model.is_classifier else None
        Q = (P[:, None, :] + Z[None, :, :] * scale).reshape(m * self.n_perturbations, d)
        if model.is_classifier:
            out = model.predict_output(Q).reshape(m, self.n_perturbations, -1)
            y = out[np.arange(m), :, classes].T  # (n_perturbations, m)
        else:
            y = model.predict_output(Q).reshape(m, self.n_perturbations).T
        coef = np.linalg.solve(gram, A.T @ (weights[:, None] * y))
        return np.abs(coef[1:].T)


def _shapley_weights(d):
    return np.array([math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)])


class ShapleyExplainer(Explainer):
    """Interventional Shapley values of the model output at ``x``.

    Up to ``exact_threshold`` features every coalition is enumerated. The
    background is the whole context when it has at most ``full_background_max``
    rows and the context mean otherwise. Above the threshold, permutation
    sampling against the context mean is used. Scores are signed.
    """

    name = "shapley"

    def __init__(self, shapley_samples=200, exact_threshold=10, seed=0, full_background_max=32,
                 max_rows=250_000):
        self.shapley_samples = int(shapley_samples)
        self.exact_threshold = int(exact_threshold)
        self.seed = seed
        self.full_background_max = full_background_max
        self.max_rows = max_rows

    def background(self, context):
        if context.n_samples <= self.full_background_max:
            return context.features
        return context.features.mean(axis=0, keepdims=True)

    def explain_batch(self, model, context, points):
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        classes = model.predict_label(P) if model.is_classifier else np.zeros(P.shape[0], dtype=np.intp)
        if P.shape[1] <= self.exact_threshold:
            return self._exact(model, self.background(context), P, classes)
        return self._sampled(model, context.features.mean(axis=0), P, classes)

    def _exact(self, model, B, P, classes):
        m, d = P.shape
        n_sets = 1 << d
        masks = ((np.arange(n_sets)[:, None] >> np.arange(d)[None, :]) & 1).astype(bool)
        per_point = n_sets * B.shape[0]
        chunk = max(1, self.max_rows // per_point)
        values = np.empty((m, n_sets))
        for start in range(0, m, chunk):
            Pc = P[start:start + chunk]
            c = Pc.shape[0]
            rows = np.where(masks[None, :, None, :], Pc[:, None, None, :], B[None, None, :, :])
            rows = rows.reshape(c * per_point, d)
            cls = np.repeat(classes[start:start + chunk], per_point)
            out = _target_output(model, rows, cls) if model.is_classifier else model.predict_output(rows)
            values[start:start + c] = out.reshape(c, n_sets, B.shape[0]).mean(axis=2)
        weights = _shapley_weights(d)
        sizes = masks.sum(axis=1)
        phi = np.zeros((m, d))
        for i in range(d):
            without = np.flatnonzero(~masks[:, i])
            phi[:, i] = (weights[sizes[without]] * (values[:, without | (1 << i)] - values[:, without])).sum(axis=1)
        return phi

    def _sampled(self, model, b, P, classes):
        m, d = P.shape
        rng = make_rng(self.seed)
        perms = np.array([rng.permutation(d) for _ in range(self.shapley_samples)])
        S = self.shapley_samples
        # present[s, t, f]: feature f switched on after t steps of permutation s
        rank = np.empty_like(perms)
        rank[np.arange(S)[:, None], perms] = np.arange(d)[None, :]
        present = rank[:, None, :] < np.arange(d + 1)[None, :, None]
        phi = np.zeros((m, d))
        for i in range(m):
            rows = np.where(present, P[i][None, None, :], b[None, None, :]).reshape(S * (d + 1), d)
            cls = np.full(rows.shape[0], classes[i])
            out = _target_output(model, rows, cls) if model.is_classifier else model.predict_output(rows)
            v = out.reshape(S, d + 1)
            gains = np.diff(v, axis=1)  # gains[s, t] belongs to feature perms[s, t]
            np.add.at(phi[i], perms.ravel(), gains.ravel())
        return phi / S


EXPLAINERS = {
    "counterfactual": CounterfactualExplainer,
    "linear_surrogate": LinearSurrogateExplainer,
    "shapley": ShapleyExplainer,
}


def make_explainer(cfg: ExplainerConfig) -> Explainer:
    if cfg.method == "counterfactual":
        return CounterfactualExplainer(cfg.resolution, cfg.regression_threshold)
    if cfg.method == "linear_surrogate":
        return LinearSurrogateExplainer(cfg.n_perturbations, cfg.kernel_width, cfg.seed)
    return ShapleyExplainer(cfg.shapley_samples, cfg.exact_shapley_threshold, cfg.seed)


def explain_counterfactual(M, context, x, resolution=200, regression_threshold=None):
    return CounterfactualExplainer(resolution, regression_threshold).explain(M, context, x)


def explain_linear_surrogate(M, context, x, cfg: ExplainerConfig):
    return LinearSurrogateExplainer(cfg.n_perturbations, cfg.kernel_width, cfg.seed).explain(M, context, x)


def explain_shapley(M, context, x, cfg: ExplainerConfig):
    return ShapleyExplainer(cfg.shapley_samples, cfg.exact_shapley_threshold, cfg.seed).explain(M, context, x)


# --------------------------------------------------------------------------- GALE

def gale_weights(importances, predictions):
    """Per-feature homogeneity weights, min-max scaled to [0, 1].

    Homogeneity of feature j is ``1 - H(q_j) / log(C)`` where ``q_j`` is the
    class-conditional mean absolute importance normalised over the ``C``
    predicted classes. Degenerate cases (one class, equal homogeneity) give
    all-ones weights.
    """
    W = np.abs(np.asarray(importances, dtype=np.float64))
    predictions = np.asarray(predictions)
    classes = np.unique(predictions)
    d = W.shape[1]
    if classes.size < 2:
        return np.ones(d)
    per_class = np.stack([W[predictions == c].mean(axis=0) for c in classes])  # (C, d)
    totals = per_class.sum(axis=0)
    q = np.where(totals > 0, per_class / np.where(totals > 0, totals, 1.0), 1.0 / classes.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        entropy = -np.where(q > 0, q * np.log(q), 0.0).sum(axis=0)
    homogeneity = 1.0 - entropy / math.log(classes.size)
    spread = homogeneity.max() - homogeneity.min()
    if spread <= 0:
        return np.ones(d)
    return (homogeneity - homogeneity.min()) / spread


def gale_reweight(importances, predictions, task="classification"):
    if task != "classification":
        raise ExplainerError("homogeneity re-weighting is only defined for classification")
    importances = np.asarray(importances, dtype=np.float64)
    return importances * gale_weights(importances, predictions)[None, :]
