"""Uniform handle over the four cohort-explanation methods.

A :class:`MethodSpec` knows how to run its method and how that method turns a
fixed member set into a cohort explanation, which is what the locality and
stability metrics need.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .algorithm import CohexConfig, run_cohex, run_single_pass
from .baselines import _repid_solution, run_vine
from .explainers import ExplainerConfig, gale_reweight, make_explainer

METHODS = ("cohex", "hier", "vine", "repid")


@dataclass(frozen=True)
class MethodSpec:
    name: str = "cohex"
    explainer: ExplainerConfig = field(default_factory=ExplainerConfig)
    k_star: int = 4
    lam: float = 1.0
    n_trials: int = 10
    patience: int = 3
    max_inner_iters: int = 50
    restarts: int = 3
    max_depth: int = 2
    gale: bool = False

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {METHODS}")
        if self.gale and self.name not in ("vine", "repid"):
            raise ValueError("homogeneity re-weighting applies to vine and repid only")

    @property
    def label(self):
        return f"{self.name}+gale" if self.gale else self.name

    @property
    def cohort_contextual(self):
        return self.name == "cohex"

    def make_explainer(self):
        return make_explainer(self.explainer)

    def cohex_config(self, seed):
        return CohexConfig(k_star=self.k_star, lam=self.lam, n_trials=self.n_trials, patience=self.patience,
                           max_inner_iters=self.max_inner_iters, restarts=self.restarts, seed=seed)

    def run(self, model, ds, seed):
        explainer = self.make_explainer()
        if self.name == "cohex":
            sol = run_cohex(model, ds, explainer, self.cohex_config(seed))
        elif self.name == "hier":
            sol = run_single_pass(model, ds, explainer, self.cohex_config(seed))
        elif self.name == "vine":
            sol = run_vine(model, ds, explainer, min(self.k_star, ds.n_samples), seed, gale=self.gale, lam=self.lam)
        else:
            sol = _repid_solution(model, ds, explainer, self.max_depth, self.gale, self.lam, None, None)
            sol.seed = seed
        sol.method = self.label
        sol.config = {"method": self.to_dict(), **sol.config}
        return sol

    def fixed_cohort_explanation(self, model, ds, members, explainer=None):
        """Explanation of the cohort ``members`` under this method's own rule.

        CohEx explains members with the cohort as context. The baselines
        explain every sample with the full dataset as context (re-weighting
        when enabled) and average over the members.
        """
        explainer = explainer or self.make_explainer()
        if self.cohort_contextual:
            ctx = ds.subset(members)
            return explainer.explain_batch(model, ctx, ctx.features).mean(axis=0)
        W = explainer.explain_batch(model, ds, ds.features)
        if self.gale:
            W = gale_reweight(W, model.predict_label(ds.features), model.task)
        return W[members].mean(axis=0)

    def augmented_cohort_explanation(self, model, ds, members, explainer=None):
        """Cohort explanation recomputed with the (augmented) cohort as context.

        Used for importance stability, where every method is allowed to
        recompute importances the way CohEx does.
        """
        explainer = explainer or self.make_explainer()
        ctx = ds.subset(members)
        W = explainer.explain_batch(model, ctx, ctx.features)
        if self.gale:
            W = gale_reweight(W, model.predict_label(ctx.features), model.task)
        return W.mean(axis=0)

    def to_dict(self):
        d = asdict(self)
        d["explainer"] = self.explainer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["explainer"] = ExplainerConfig(**d["explainer"])
        return cls(**d)

    def with_k_star(self, k_star):
        return replace(self, k_star=k_star)
