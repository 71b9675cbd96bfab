"""Cohort regions: membership tests for arbitrary (possibly unsampled) points."""

from __future__ import annotations

import numpy as np


class Region:
    kind = "abstract"

    def locate(self, X) -> np.ndarray:
        """Cohort index of every row of ``X``; -1 where no cohort claims it."""
        raise NotImplementedError

    def contains(self, X, cohort: int) -> np.ndarray:
        return self.locate(np.atleast_2d(X)) == cohort


class CentroidRegion(Region):
    """Nearest-centroid cells under standardized Euclidean distance.

    Ties go to the centroid listed first.
    """

    kind = "centroid"

    def __init__(self, centroids, mean, std):
        self.centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self._zc = (self.centroids - self.mean) / self.std

    def locate(self, X):
        Z = (np.atleast_2d(np.asarray(X, dtype=np.float64)) - self.mean) / self.std
        # must stay bit-identical to clustering.pairwise_distances
        d2 =((Z[:, None, :] - self._zc[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


class BoxRegion(Region):
    """Axis-aligned leaf boxes of a partition tree, ``lo < x <= hi`` per feature."""

    kind = "box"

    def __init__(self, lows, highs):
        self.lows = np.atleast_2d(np.asarray(lows, dtype=np.float64))
        self.highs = np.atleast_2d(np.asarray(highs, dtype=np.float64))

    def locate(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        inside = np.all((X[:, None, :] > self.lows[None]) & (X[:, None, :] <= self.highs[None]), axis=2)
        return np.where(inside.any(axis=1), np.argmax(inside, axis=1), -1)


class MemberRegion(Region):
    """Cohorts known only by their member rows; a point belongs to a cohort iff
    it coincides exactly with one of its members."""

    kind = "members"

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels)
        self._index = {row.tobytes(): int(lab) for row, lab in zip(self.features, self.labels)}

    def locate(self, X):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return np.array([self._index.get(row.tobytes(), -1) for row in X], dtype=np.intp)
