import numpy as np
import pytest

from cohex.algorithm import CohexConfig, CohortExplainError, run_cohex, run_single_pass
from cohex.clustering import ObjectiveParams, objective, sridhcr
from cohex.dataset import Dataset, PatientGenConfig, generate_patients
from cohex.explainers import CounterfactualExplainer
from cohex.models import FunctionModel, train_cart
from oracles import exhaustive_centroids


def small_cfg(**kw):
    base = dict(k_star=4, lam=1.0, n_trials=3, patience=2, max_inner_iters=10, restarts=2, seed=0)
    base.update(kw)
    return CohexConfig(**base)


class TestRunCohex:
    def test_constant_explainer(self, patients, patient_tree, constant_explainer):
        sol = run_cohex(patient_tree, patients, constant_explainer, small_cfg(n_trials=1, patience=3))
        assert sol.objective == pytest.approx(0.0, abs=1e-20)  # summation round-off only
        # nothing changes, so the trial stops once patience runs out
        assert sol.stats["mean_iterations"] == 4
        np.testing.assert_allclose(sol.explanations, np.tile([0.3, 0.7], (sol.k, 1)), rtol=0, atol=1e-12)

    def test_global_limit(self, patients, patient_tree):
        ex = CounterfactualExplainer()
        sol = run_cohex(patient_tree, patients, ex, small_cfg(k_star=1, lam=1e6, n_trials=2))
        assert sol.k == 1
        W = ex.explain_batch(patient_tree, patients, patients.features)
        np.testing.assert_allclose(sol.explanations[0], W.mean(axis=0), atol=1e-12)

    def test_explanations_are_cohort_means(self, patients, patient_tree):
        sol = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg())
        for j in range(sol.k):
            np.testing.assert_allclose(sol.explanations[j], sol.importances[sol.members(j)].mean(axis=0), atol=1e-12)
        assert sol.objective == pytest.approx(objective(sol.importances, sol.labels, small_cfg().params), abs=1e-12)

    def test_coverage(self, patients, patient_tree):
        sol = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg())
        assert sol.labels.shape == (patients.n_samples,)
        assert sorted(np.unique(sol.labels)) == list(range(sol.k))
        np.testing.assert_array_equal(sol.region.locate(patients.features), sol.labels)

    def test_trace_best_non_increasing(self, patients, patient_tree):
        sol = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg())
        best = [row["best"] for row in sol.loss_trace]
        assert all(b <= a for a, b in zip(best, best[1:]))
        assert best[-1] == sol.objective

    def test_bit_exact_rerun(self, patients, patient_tree):
        a = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg(seed=5))
        b = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg(seed=5))
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.importances.tobytes() == b.importances.tobytes()
        assert a.objective == b.objective

    def test_stats(self, patients, patient_tree):
        sol = run_cohex(patient_tree, patients, CounterfactualExplainer(), small_cfg())
        assert set(sol.stats) == {"n_trials", "mean_iterations", "mean_k", "explainer_calls", "T_mean_s"}
        assert sol.stats["explainer_calls"] > 0

    def test_k_star_too_large(self, patient_tree, constant_explainer):
        ds = generate_patients(PatientGenConfig(3, 0))
        with pytest.raises(ValueError):
            run_cohex(patient_tree, ds, constant_explainer, small_cfg(k_star=4))

    def test_explainer_failure_names_cohort(self, patients, patient_tree):
        class Broken:
            def explain_batch(self, model, context, points):
                raise RuntimeError("boom")

        with pytest.raises(CohortExplainError) as err:
            run_cohex(patient_tree, patients, Broken(), small_cfg())
        assert err.value.cohort == 0

    def test_singleton_cohort_context(self, step_model):
        ds = Dataset(np.array([[0.1], [0.9], [5.0]]))
        sol = run_cohex(step_model, ds, CounterfactualExplainer(), small_cfg(k_star=3, n_trials=1))
        assert sol.k >= 1


class TestSinglePass:
    def test_constant_explainer(self, patients, patient_tree, constant_explainer):
        sol = run_single_pass(patient_tree, patients, constant_explainer, small_cfg())
        assert sol.objective == pytest.approx(
            ObjectiveParams(1.0, 4).lam * np.sqrt(max((sol.k - 4) / patients.n_samples, 0)))
        assert sol.method == "hier"

    def test_matches_cohex_for_context_free(self, patients, patient_tree, context_free_explainer):
        cfg = small_cfg(n_trials=4, seed=3)
        a = run_single_pass(patient_tree, patients, context_free_explainer, cfg)
        b = run_cohex(patient_tree, patients, context_free_explainer, cfg)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.objective == b.objective
        np.testing.assert_array_equal(a.explanations, b.explanations)

    def test_single_pass_flag(self, patients, patient_tree, context_free_explainer):
        cfg = small_cfg(single_pass=True)
        a = run_cohex(patient_tree, patients, context_free_explainer, cfg)
        assert a.method == "hier"

    def test_two_cluster_oracle(self):
        X = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
        ds = Dataset(X)
        model = FunctionModel(lambda P: (P[:, 0] > 5).astype(int))

        class ByHalf:
            def explain_batch(self, m, context, points):
                return np.where(points[:, :1] > 5, [[0.0, 1.0]], [[1.0, 0.0]])

        sol = run_single_pass(model, ds, ByHalf(), small_cfg(k_star=2))
        value, labels = exhaustive_centroids(X.tolist(), ds.std.tolist(), ByHalf().explain_batch(None, ds, X).tolist(),
                                             1.0, 2)
        assert sol.objective == value == 0.0
        direct = sridhcr(ds, ByHalf().explain_batch(None, ds, X), ObjectiveParams(1.0, 2), seed=0, restarts=2)
        np.testing.assert_array_equal(sol.labels, direct.labels)
        assert sol.labels.tolist() == [0, 0, 1, 1]


@pytest.mark.slow
def test_cohex_beats_hierarchical_on_most_seeds():
    wins = 0
    for seed in range(10):
        ds = generate_patients(PatientGenConfig(200, seed))
        model = train_cart(ds, max_depth=2)
        cfg = CohexConfig(k_star=4, seed=seed)
        ex = CounterfactualExplainer()
        wins += run_cohex(model, ds, ex, cfg).objective <= run_single_pass(model, ds, ex, cfg).objective
    assert wins >= 8
