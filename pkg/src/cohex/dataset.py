"""Tabular data model, CSV ingestion and the synthetic patient generator."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureMeta:
    """Description of one raw input column.

    ``columns`` lists the positions this feature occupies in the encoded
    feature matrix (one for continuous features, one per level for categorical
    ones).
    """

    name: str
    kind: str = "continuous"
    levels: tuple = ()
    observed_range: Optional[tuple] = None
    columns: tuple = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DatasetError(f"unknown feature kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.levels or len(set(self.levels)) != len(self.levels):
                raise DatasetError(f"categorical feature {self.name!r} needs unique, non-empty levels")
        elif self.observed_range is not None and self.observed_range[0] > self.observed_range[1]:
            raise DatasetError(f"feature {self.name!r} has min > max")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix plus optional labels.

    ``mean`` and ``std`` are the column statistics used for every distance
    computation. Subsets keep the statistics of the dataset they came from so
    cohort geometry stays comparable across subsets.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    meta: tuple = ()
    columns: tuple = ()
    mean: np.ndarray = None
    std: np.ndarray = None
    label_levels: Optional[tuple] = None
    categorical_raw: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if X.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        if X.shape[0] < 1:
            raise DatasetError("dataset must contain at least one sample")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain missing or non-finite values")
        object.__setattr__(self, "features", X)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (X.shape[0],):
                raise DatasetError("labels must have one entry per sample")
            object.__setattr__(self, "labels", y)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"x{i}" for i in range(X.shape[1])))
        if not self.meta:
            meta = tuple(
                FeatureMeta(name, "continuous", observed_range=(float(X[:, i].min()), float(X[:, i].max())), columns=(i,))
                for i, name in enumerate(self.columns)
            )
            object.__setattr__(self, "meta", meta)
        if self.mean is None or self.std is None:
            mean, std = column_stats(X)
            object.__setattr__(self, "mean", mean)
            object.__setattr__(self, "std", std)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def subset(self, idx) -> "Dataset":
        """Rows ``idx`` as a new dataset sharing this dataset's standardization."""
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(
            features=self.features[idx],
            labels=None if self.labels is None else self.labels[idx],
            meta=self.meta,
            columns=self.columns,
            mean=self.mean,
            std=self.std,
            label_levels=self.label_levels,
        )

    def with_rows(self, rows) -> "Dataset":
        """A context made of arbitrary rows, keeping this dataset's standardization."""
        return Dataset(features=np.atleast_2d(rows), meta=self.meta, columns=self.columns,
                       mean=self.mean, std=self.std)

    def to_csv(self, path, label_name="label"):
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = list(self.columns) + ([label_name] if self.labels is not None else [])
            writer.writerow(header)
            for i in range(self.n_samples):
                row = [repr(float(v)) for v in self.features[i]]
                if self.labels is not None:
                    lab = self.labels[i]
                    row.append(str(int(lab)) if np.issubdtype(self.labels.dtype, np.integer) else repr(float(lab)))
                writer.writerow(row)


def column_stats(X):
    """Per-column mean and population stddev; constant columns get stddev 1."""
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def standardized_distance(a, b, ds: Dataset) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (ds.n_features,) or b.shape != (ds.n_features,):
        raise DatasetError(f"expected vectors of length {ds.n_features}, got {a.shape} and {b.shape}")
    return float(np.linalg.norm((a - b) / ds.std))


def _parse_floats(col):
    """Exact (round-trip) decimal parsing; None if any entry is not a number."""
    try:
        values = np.array(col.tolist(), dtype=np.float64)
    except ValueError:
        return None
    return values if np.all(np.isfinite(values)) else None


def load_csv(path, target_column: Optional[str], categorical_columns: Sequence[str] = ()) -> Dataset:
    """Read a headed, comma-separated UTF-8 file into a :class:`Dataset`.

    Categorical columns are one-hot encoded with levels in sorted order. A
    non-numeric target column is mapped to integer class codes.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"no such file: {path}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        raise DatasetError(f"{path} is empty") from None
    if df.shape[0] == 0:
        raise DatasetError(f"{path} has a header but no rows")
    df.columns = [c.strip() for c in df.columns]
    wanted = list(categorical_columns) + ([target_column] if target_column else [])
    missing = [c for c in wanted if c not in df.columns]
    if missing:
        raise DatasetError(f"columns not found in {path}: {missing}")

    labels = None
    label_levels = None
    if target_column:
        raw = df.pop(target_column).str.strip()
        if (raw == "").any():
            raise DatasetError(f"missing values in target column {target_column!r}")
        values = _parse_floats(raw)
        if values is None:
            label_levels = tuple(sorted(raw.unique()))
            labels = np.searchsorted(np.array(label_levels), raw.to_numpy()).astype(np.int64)
        elif raw.str.fullmatch(r"-?\d+").all():
            labels = values.astype(np.int64)
        else:
            labels = values

    blocks, columns, meta, cat_raw = [], [], [], {}
    cats = set(categorical_columns)
    for name in df.columns:
        col = df[name].str.strip()
        if (col == "").any():
            raise DatasetError(f"missing values in column {name!r}")
        start = len(columns)
        if name in cats:
            levels = tuple(sorted(col.unique()))
            onehot = (col.to_numpy()[:, None] == np.array(levels)[None, :]).astype(np.float64)
            blocks.append(onehot)
            columns.extend(f"{name}={lev}" for lev in levels)
            meta.append(FeatureMeta(name, "categorical", levels=levels, columns=tuple(range(start, start + len(levels)))))
            cat_raw[name] = col.tolist()
        else:
            v = _parse_floats(col)
            if v is None:
                bad = next(x for x in col if _parse_floats(pd.Series([x])) is None)
                raise DatasetError(f"non-numeric value {bad!r} in continuous column {name!r}")
            blocks.append(v[:, None])
            columns.append(name)
            meta.append(FeatureMeta(name, "continuous", observed_range=(float(v.min()), float(v.max())), columns=(start,)))
    if not blocks:
        raise DatasetError(f"{path} has no feature columns")
    X = np.hstack(blocks)
    return Dataset(features=X, labels=labels, meta=tuple(meta), columns=tuple(columns),
                   label_levels=label_levels, categorical_raw=cat_raw)


# Age decade probabilities for the synthetic patient population.
AGE_DECADE_PROBS = (0.14, 0.15, 0.14, 0.15, 0.15, 0.11, 0.07, 0.06, 0.02, 0.01)


@dataclass(frozen=True)
class PatientGenConfig:
    n: int
    seed: int
    flip_prob: float = 0.2
    boundary_level: float = 0.4

    def __post_init__(self):
        if self.n < 1:
            raise DatasetError("n must be at least 1")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise DatasetError("flip_prob must lie in [0, 1]")


def risk_score(age, family):
    return 4.0 * (np.asarray(age) / 100.0) ** 2 + (0.75 * np.asarray(family)) ** 2


def generate_patients(cfg: PatientGenConfig) -> Dataset:
    """Two-feature (age, family history) binary classification population."""
    rng = np.random.default_rng(cfg.seed)
    decade = rng.choice(10, size=cfg.n, p=AGE_DECADE_PROBS)
    age = 10.0 * decade + rng.uniform(0.0, 10.0, size=cfg.n)
    family = rng.uniform(0.0, 1.0, size=cfg.n)
    clean = (risk_score(age, family) >= cfg.boundary_level).astype(np.int64)
    flip = rng.uniform(0.0, 1.0, size=cfg.n) < cfg.flip_prob
    labels = np.where(flip, 1 - clean, clean)
    return Dataset(features=np.column_stack([age, family]), labels=labels, columns=("age", "family"))
