import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohex.clustering import (ObjectiveParams, assign, cohort_means, conciseness_penalty, generalizability_loss,
                              objective, pairwise_distances, sridhcr)
from cohex.dataset import Dataset
from oracles import exhaustive_centroids, partition_objective


def unit_scaled(X):
    X = np.asarray(X, dtype=float)
    return Dataset(X, mean=np.zeros(X.shape[1]), std=np.ones(X.shape[1]))


class TestAssign:
    def test_nearest(self):
        ds = unit_scaled([[1.0, 2.0], [9.0, 9.0]])
        asg = assign([[0.0, 0.0], [10.0, 10.0]], ds)
        assert asg.labels.tolist() == [0, 1]

    def test_tie_goes_to_first(self):
        ds = unit_scaled([[5.0, 5.0], [0.0, 0.0], [10.0, 10.0]])
        assert assign([[0.0, 0.0], [10.0, 10.0]], ds).labels.tolist() == [0, 0, 1]
        assert assign([[10.0, 10.0], [0.0, 0.0]], ds).labels.tolist() == [0, 1, 0]

    def test_single_centroid(self, patients):
        asg = assign(patients.features[:1], patients)
        assert asg.k == 1 and np.all(asg.labels == 0)

    def test_empty_cohorts_pruned(self):
        ds = unit_scaled([[0.0], [1.0]])
        asg = assign([[0.0], [100.0], [1.0]], ds)
        assert asg.k == 2
        np.testing.assert_array_equal(asg.centroids, [[0.0], [1.0]])
        assert asg.labels.tolist() == [0, 1]

    def test_idempotent(self, patients):
        asg = assign(patients.features[[3, 50, 120]], patients)
        again = assign(asg.centroids, patients)
        np.testing.assert_array_equal(asg.labels, again.labels)

    def test_standardized_scale_matters(self):
        # raw distances favour centroid 1, standardized ones centroid 0
        X = np.array([[0.0, 0.0], [0.0, 100.0], [3.0, 40.0]])
        ds = Dataset(X, mean=np.zeros(2), std=np.array([1.0, 100.0]))
        assert assign(X[:2], ds).labels[2] == 0


class TestObjective:
    def test_identical_importances(self):
        assert generalizability_loss(np.ones((5, 2)), np.zeros(5, dtype=int)) == 0.0

    def test_half(self):
        assert generalizability_loss([[1.0, 0.0], [0.0, 1.0]], [0, 0]) == pytest.approx(0.5)

    def test_singletons(self):
        assert generalizability_loss([[1.0, 0.0], [0.0, 1.0]], [0, 1]) == 0.0

    def test_penalty(self):
        params = ObjectiveParams(lam=0.1, k_star=4)
        assert conciseness_penalty(6, params, 100) == pytest.approx(0.014142, abs=1e-6)
        assert conciseness_penalty(3, params, 100) == 0.0

    def test_lambda_zero(self):
        W = np.random.default_rng(0).uniform(size=(10, 3))
        labels = np.arange(10) % 7
        assert objective(W, labels, ObjectiveParams(0.0, 1)) == generalizability_loss(W, labels)

    def test_matches_reference(self):
        rng = np.random.default_rng(1)
        W = rng.uniform(size=(12, 2))
        labels = rng.integers(0, 5, size=12)
        ref = partition_objective(W.tolist(), labels.tolist(), 0.7, 2)
        assert objective(W, labels, ObjectiveParams(0.7, 2)) == pytest.approx(ref, abs=1e-12)

    def test_cohort_means(self):
        means = cohort_means([[1.0, 0.0], [3.0, 2.0], [5.0, 5.0]], [0, 0, 1])
        np.testing.assert_array_equal(means, [[2.0, 1.0], [5.0, 5.0]])

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ObjectiveParams(lam=-1)
        with pytest.raises(ValueError):
            ObjectiveParams(k_star=0)


class TestSridhcr:
    def two_pairs(self):
        ds = unit_scaled([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
        W = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        return ds, W

    def test_two_pairs(self):
        ds, W = self.two_pairs()
        params = ObjectiveParams(1.0, 2)
        asg = sridhcr(ds, W, params, seed=0, restarts=3)
        value, _ = exhaustive_centroids(ds.features.tolist(), ds.std.tolist(), W.tolist(), 1.0, 2)
        assert value == 0.0
        assert asg.objective == 0.0
        assert asg.labels[0] == asg.labels[1] != asg.labels[2] == asg.labels[3]

    def test_all_singletons(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.normal(size=(7, 2)))
        W = rng.uniform(size=(7, 3))
        asg = sridhcr(ds, W, ObjectiveParams(0.0, 7), seed=1, restarts=1)
        assert asg.objective == 0.0
        assert asg.k == 7

    def test_history_monotone_and_no_worse_than_start(self, patients):
        W = np.random.default_rng(0).uniform(size=(patients.n_samples, 2))
        asg = sridhcr(patients, W, ObjectiveParams(0.5, 4), seed=3, restarts=3)
        for trace in asg.history:
            assert all(b < a for a, b in zip(trace, trace[1:]))
        assert asg.objective == min(t[-1] for t in asg.history)

    def test_init_restart(self, patients):
        W = np.random.default_rng(1).uniform(size=(patients.n_samples, 2))
        D = pairwise_distances(patients)
        init = [0, 10, 20, 30]
        asg = sridhcr(patients, W, ObjectiveParams(0.5, 4), seed=3, restarts=1, init=init, distances=D)
        start = objective(W, np.argmin(D[:, init], axis=1), ObjectiveParams(0.5, 4))
        assert asg.history[0][0] == pytest.approx(start, abs=1e-12)
        assert asg.objective <= start

    def test_deterministic(self, patients):
        W = np.random.default_rng(4).uniform(size=(patients.n_samples, 2))
        a = sridhcr(patients, W, ObjectiveParams(1.0, 4), seed=8, restarts=2)
        b = sridhcr(patients, W, ObjectiveParams(1.0, 4), seed=8, restarts=2)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.objective == b.objective

    def test_reported_objective_consistent(self, patients):
        W = np.random.default_rng(5).uniform(size=(patients.n_samples, 3))
        params = ObjectiveParams(0.3, 3)
        asg = sridhcr(patients, W, params, seed=2, restarts=2)
        assert asg.objective == pytest.approx(objective(W, asg.labels, params), abs=1e-12)
        np.testing.assert_array_equal(assign(asg.centroids, patients).labels, asg.labels)

    def test_bad_restarts(self, patients):
        with pytest.raises(ValueError):
            sridhcr(patients, np.zeros((patients.n_samples, 2)), ObjectiveParams(), seed=0, restarts=0)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(3, 6))
    def test_never_worse_than_oracle_by_much(self, seed, n):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 2))
        W = rng.integers(0, 3, size=(n, 1)).astype(float)
        ds = Dataset(X)
        params = ObjectiveParams(0.2, 2)
        asg = sridhcr(ds, W, params, seed=seed, restarts=2)
        best, _ = exhaustive_centroids(X.tolist(), ds.std.tolist(), W.tolist(), 0.2, 2)
        assert asg.objective >= best - 1e-9
