import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohex.dataset import Dataset
from cohex.explainers import (CounterfactualExplainer, ExplainerConfig, ExplainerError, LinearSurrogateExplainer,
                              ShapleyExplainer, explain_counterfactual, explain_linear_surrogate, explain_shapley,
                              gale_reweight, gale_weights, make_explainer)
from cohex.models import FunctionModel, train_cart


def brute_counterfactual(model, lo, hi, x, f, step=1e-3):
    """Smallest flipping offset along feature f on a fine grid, scaled to an importance."""
    base = model.predict_label(np.atleast_2d(x))[0]
    span = hi - lo
    for k in range(1, int(round(span / step)) + 1):
        for sign in (1, -1):
            q = np.array(x, dtype=float)
            q[f] += sign * k * step
            if lo - 1e-12 <= q[f] <= hi + 1e-12 and model.predict_label(q[None, :])[0] != base:
                return 1.0 - k * step / span
    return 0.0


def brute_shapley(fn, x, background):
    """Average marginal contribution over all feature orderings."""
    d = len(x)

    def value(present):
        rows = np.array(background, dtype=float)
        for f in present:
            rows[:, f] = x[f]
        return fn(rows).mean()

    phi = np.zeros(d)
    perms = list(itertools.permutations(range(d)))
    for perm in perms:
        present = []
        for f in perm:
            before = value(present)
            present.append(f)
            phi[f] += value(present) - before
    return phi / len(perms)


@pytest.fixture
def unit_context():
    return Dataset(np.linspace(0, 1, 11)[:, None])


class TestCounterfactual:
    def test_step_example(self, step_model, unit_context):
        score = explain_counterfactual(step_model, unit_context, [0.3])
        oracle = brute_counterfactual(step_model, 0.0, 1.0, [0.3], 0)
        assert oracle == pytest.approx(0.8, abs=1e-3)
        assert score[0] == pytest.approx(0.8, abs=1e-12)

    def test_matches_grid_oracle(self, step_model, unit_context):
        for x in np.linspace(0.0, 1.0, 23):
            score = explain_counterfactual(step_model, unit_context, [x])[0]
            assert score == pytest.approx(brute_counterfactual(step_model, 0.0, 1.0, [x], 0), abs=1 / 200 + 1e-3)

    def test_ignored_feature(self):
        model = FunctionModel(lambda X: (X[:, 0] > 0).astype(int))
        ctx = Dataset(np.random.default_rng(0).uniform(-1, 1, size=(30, 3)))
        scores = CounterfactualExplainer().explain_batch(model, ctx, ctx.features[:5])
        np.testing.assert_array_equal(scores[:, 1:], 0.0)

    def test_on_boundary(self, step_model, unit_context):
        assert explain_counterfactual(step_model, unit_context, [0.5])[0] == pytest.approx(1 - 1 / 200)

    def test_zero_width_range(self, step_model):
        ctx = Dataset(np.full((4, 1), 0.3))
        assert explain_counterfactual(step_model, ctx, [0.3])[0] == 0.0

    def test_regression_threshold(self):
        model = FunctionModel(lambda X: 10 * X[:, 0], task="regression")
        ctx = Dataset(np.linspace(0, 1, 11)[:, None])
        # output change > 1 needs an offset > 0.1, i.e. 21 grid steps
        score = explain_counterfactual(model, ctx, [0.5], regression_threshold=1.0)[0]
        assert score == pytest.approx(1 - 21 / 200)

    def test_scores_in_unit_interval(self, patients, patient_tree):
        scores = CounterfactualExplainer().explain_batch(patient_tree, patients, patients.features)
        assert scores.min() >= 0.0 and scores.max() <= 1.0


class TestLinearSurrogate:
    def linear_model(self):
        return FunctionModel(lambda X: 2 * X[:, 0] + 0 * X[:, 1], task="regression")

    def context(self):
        rng = np.random.default_rng(3)
        return Dataset(rng.standard_normal((200, 2)) * np.array([1.0, 1.0]))

    def test_coefficient_ratio(self):
        ctx = self.context()
        cfg = ExplainerConfig("linear_surrogate", n_perturbations=2000, seed=1)
        s = explain_linear_surrogate(self.linear_model(), ctx, [0.2, -0.1], cfg)
        assert s[0] / s.max() == pytest.approx(1.0)
        assert s[1] / s.max() < 0.05

    def test_large_sample_oracle(self):
        ctx = self.context()
        cfg = ExplainerConfig("linear_surrogate", n_perturbations=100_000, seed=2)
        s = explain_linear_surrogate(self.linear_model(), ctx, [0.0, 0.0], cfg)
        scale = ctx.features.std(axis=0)
        np.testing.assert_allclose(s, [2 * scale[0], 0.0], atol=1e-6)

    def test_constant_model(self, patients):
        model = FunctionModel(lambda X: np.full(len(X), 3.0), task="regression")
        s = LinearSurrogateExplainer(n_perturbations=300).explain(model, patients, patients.features[0])
        assert np.all(s <= 1e-6)

    def test_seed_determinism(self, patients, patient_tree):
        a = LinearSurrogateExplainer(seed=5).explain_batch(patient_tree, patients, patients.features[:10])
        b = LinearSurrogateExplainer(seed=5).explain_batch(patient_tree, patients, patients.features[:10])
        np.testing.assert_array_equal(a, b)

    def test_too_few_perturbations(self, patients, patient_tree):
        with pytest.raises(ExplainerError):
            LinearSurrogateExplainer(n_perturbations=2).explain(patient_tree, patients, patients.features[0])

    def test_singleton_context(self, patients, patient_tree):
        ctx = patients.subset([4])
        s = LinearSurrogateExplainer().explain(patient_tree, ctx, ctx.features[0])
        assert np.all(np.isfinite(s))


class TestShapley:
    def test_additive(self):
        model = FunctionModel(lambda X: X[:, 0] + X[:, 1], task="regression")
        ctx = Dataset(np.array([[-1.0, 1.0], [1.0, -1.0]]))
        cfg = ExplainerConfig("shapley")
        np.testing.assert_allclose(explain_shapley(model, ctx, [3.0, 5.0], cfg), [3.0, 5.0], atol=1e-12)

    def test_efficiency(self, patients, patient_tree):
        ex = ShapleyExplainer()
        for ctx in (patients.subset(range(20)), patients):
            phi = ex.explain_batch(patient_tree, ctx, patients.features[:15])
            B = ex.background(ctx)
            for i, x in enumerate(patients.features[:15]):
                c = patient_tree.predict_label(x[None, :])[0]
                target = patient_tree.predict_output(x[None, :])[0, c] - patient_tree.predict_output(B)[:, c].mean()
                assert phi[i].sum() == pytest.approx(target, abs=1e-9)

    def test_cart_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(60, 3))
        y = X[:, 0] + 2 * X[:, 1] * X[:, 2] + 0.1 * rng.normal(size=60)
        model = train_cart(Dataset(X, labels=y), max_depth=3)
        ctx = Dataset(X[:20])
        phi = ShapleyExplainer().explain_batch(model, ctx, X[20:30])
        for i, x in enumerate(X[20:30]):
            np.testing.assert_allclose(phi[i], brute_shapley(model.predict_output, x, ctx.features), atol=1e-9)

    def test_symmetry(self):
        model = FunctionModel(lambda X: X[:, 0] * X[:, 1] + X[:, 2], task="regression")
        ctx = Dataset(np.array([[0.5, 0.5, 0.0], [1.5, 1.5, 1.0]]))
        phi = ShapleyExplainer().explain(model, ctx, [2.0, 2.0, 1.0])
        assert phi[0] == pytest.approx(phi[1], abs=1e-12)

    def test_sampled_mode_close_to_exact(self):
        model = FunctionModel(lambda X: X @ np.arange(1.0, 5.0), task="regression")
        ctx = Dataset(np.random.default_rng(1).normal(size=(50, 4)))
        x = np.array([1.0, -1.0, 2.0, 0.5])
        sampled = ShapleyExplainer(exact_threshold=2, shapley_samples=50).explain(model, ctx, x)
        np.testing.assert_allclose(sampled, np.arange(1.0, 5.0) * (x - ctx.features.mean(axis=0)), atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from(["counterfactual", "linear_surrogate", "shapley"]))
def test_context_order_invariance(seed, method):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(25, 2))
    model = train_cart(Dataset(X, labels=(X.sum(axis=1) > 1).astype(int)), max_depth=2)
    ex = make_explainer(ExplainerConfig(method, n_perturbations=100, seed=3))
    a = ex.explain_batch(model, Dataset(X), X[:4])
    b = ex.explain_batch(model, Dataset(X[rng.permutation(25)]), X[:4])
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


class TestGale:
    def test_equal_homogeneity(self):
        W = np.array([[0.2, 0.2], [0.4, 0.4]])
        np.testing.assert_array_equal(gale_weights(W, [0, 1]), [1.0, 1.0])
        np.testing.assert_array_equal(gale_reweight(W, [0, 1]), W)

    def test_lowest_homogeneity_zeroed(self):
        # feature 0 is evenly spread across classes, feature 1 is concentrated in class 1
        W = np.array([[0.5, 0.0], [0.5, 0.1], [0.5, 0.9], [0.5, 0.8]])
        preds = np.array([0, 0, 1, 1])
        out = gale_reweight(W, preds)
        np.testing.assert_array_equal(out[:, 0], 0.0)
        np.testing.assert_array_equal(out[:, 1], W[:, 1])

    def test_entropy_oracle(self):
        W = np.array([[0.3, 0.1, 0.6], [0.2, 0.5, 0.1], [0.4, 0.2, 0.3]])
        preds = np.array([0, 1, 1])
        h = []
        for j in range(3):
            q = np.array([W[preds == c, j].mean() for c in (0, 1)])
            q = q / q.sum()
            h.append(1 + sum(v * math.log(v) for v in q) / math.log(2))
        h = np.array(h)
        np.testing.assert_allclose(gale_weights(W, preds), (h - h.min()) / (h.max() - h.min()), atol=1e-12)

    def test_all_zero(self):
        np.testing.assert_array_equal(gale_reweight(np.zeros((4, 3)), [0, 1, 0, 1]), 0.0)

    def test_single_class(self):
        np.testing.assert_array_equal(gale_weights(np.ones((3, 2)), [1, 1, 1]), 1.0)

    def test_regression_rejected(self):
        with pytest.raises(ExplainerError):
            gale_reweight(np.ones((2, 2)), [0.1, 0.2], task="regression")


def test_config_validation():
    with pytest.raises(ExplainerError):
        ExplainerConfig("lime")
    with pytest.raises(ExplainerError):
        ExplainerConfig("shapley", shapley_samples=0)
    with pytest.raises(ExplainerError):
        ExplainerConfig("linear_surrogate", kernel_width=0.0)
