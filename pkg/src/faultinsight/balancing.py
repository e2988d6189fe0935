"""Class balancing: random undersampling, random oversampling, multiclass SMOTE.

Each sampler follows the ``fit_resample(X, y)`` convention and records the
origin of every output row in ``provenance_``.  Output row order is
deterministic: kept originals first (in input order), then generated rows
grouped by class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_X_y

from .data import STEEL_INDEX, FaultTable

STRATEGIES = ("none", "undersample", "oversample", "smote")


@dataclass(frozen=True)
class BalanceConfig:
    strategy: str = "smote"
    k_neighbors: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if int(self.k_neighbors) < 1:
            raise ValueError("k_neighbors must be >= 1")


def _class_seeds(seed, n_classes):
    # independent per-class streams so per-class work can run in any order
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_classes)]


class RandomUndersampler(BaseEstimator):
    """Downsample every class, without replacement, to the minority count."""

    def __init__(self, seed=0):
        self.seed = seed

    def fit_resample(self, X, y):
        X, y = check_X_y(X, y)
        classes, counts = np.unique(y, return_counts=True)
        target = counts.min()
        keep = []
        for rng, c in zip(_class_seeds(self.seed, len(classes)), classes):
            members = np.flatnonzero(y == c)
            keep.append(rng.choice(members, size=target, replace=False))
        idx = np.sort(np.concatenate(keep))
        self.sample_indices_ = idx
        self.provenance_ = np.full(idx.size, "original", dtype=object)
        return X[idx], y[idx]


class RandomOversampler(BaseEstimator):
    """Upsample every class to the majority count by resampling its own rows."""

    def __init__(self, seed=0):
        self.seed = seed

    def fit_resample(self, X, y):
        X, y = check_X_y(X, y)
        classes, counts = np.unique(y, return_counts=True)
        target = counts.max()
        extra = []
        for rng, c, n in zip(_class_seeds(self.seed, len(classes)), classes, counts):
            if n < target:
                members = np.flatnonzero(y == c)
                extra.append(rng.choice(members, size=target - n, replace=True))
        extra = np.concatenate(extra) if extra else np.empty(0, dtype=np.int64)
        idx = np.concatenate([np.arange(len(y)), extra])
        self.sample_indices_ = idx
        self.provenance_ = np.array(["original"] * len(y) + ["duplicated"] * extra.size, dtype=object)
        return X[idx], y[idx]


def _standardize(Xc):
    mean = Xc.mean(axis=0)
    sd = Xc.std(axis=0)
    sd[sd == 0] = 1.0
    return (Xc - mean) / sd


def nearest_neighbors(Z, k):
    """Indices of the ``k`` nearest other rows of ``Z`` (Euclidean).

    Distance ties resolve to the lower row index.
    """
    n = Z.shape[0]
    sq = np.einsum("ij,ij->i", Z, Z)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k] if n > 1 else np.empty((n, 0), dtype=np.int64)


class MulticlassSMOTE(BaseEstimator):
    """SMOTE extended to many classes by pairing the majority with each smaller class.

    For every non-majority class, synthetic rows are added until the class
    reaches the majority count.  A synthetic row is ``x + lam * (nb - x)``
    where ``x`` is a random class member, ``nb`` one of its ``k_neighbors``
    nearest same-class rows and ``lam ~ U[0, 1)`` is shared by all
    coordinates.  Neighbours are searched on per-class z-scored numeric
    columns; categorical columns are copied from ``x``.

    Parameters
    ----------
    k_neighbors : int, default=5
    seed : int, default=0
    categorical : sequence of int, default=(STEEL_INDEX,)
        Column indices excluded from distances and interpolation.
    """

    def __init__(self, k_neighbors=5, seed=0, categorical=(STEEL_INDEX,)):
        self.k_neighbors = k_neighbors
        self.seed = seed
        self.categorical = categorical

    def fit_resample(self, X, y):
        X, y = check_X_y(X, y)
        k = int(self.k_neighbors)
        if k < 1:
            raise ValueError("k_neighbors must be >= 1")
        classes, counts = np.unique(y, return_counts=True)
        target = counts.max()
        for c, n in zip(classes, counts):
            if n < 2:
                raise ValueError(f"class {c!r} has {n} row(s); SMOTE needs at least 2")
            if n < target and k >= n:
                raise ValueError(f"k_neighbors={k} out of range for class {c!r} with {n} rows")
        cat = np.zeros(X.shape[1], dtype=bool)
        cat[list(self.categorical)] = True
        num = ~cat

        new_X, new_y, parents = [], [], []
        for rng, c, n in zip(_class_seeds(self.seed, len(classes)), classes, counts):
            need = target - n
            if need == 0:
                continue
            members = np.flatnonzero(y == c)
            Xc = X[members]
            nbrs = nearest_neighbors(_standardize(Xc[:, num]), k)
            seeds = rng.integers(0, n, size=need)
            picks = nbrs[seeds, rng.integers(0, k, size=need)]
            lam = rng.random(need)[:, None]
            base = Xc[seeds]
            synth = base.copy()
            synth[:, num] = base[:, num] + lam * (Xc[picks][:, num] - base[:, num])
            new_X.append(synth)
            new_y.append(np.full(need, c, dtype=y.dtype))
            parents.append(np.column_stack([members[seeds], members[picks]]))
        if new_X:
            X_out = np.vstack([X] + new_X)
            y_out = np.concatenate([y] + new_y)
            self.parents_ = np.vstack(parents)
        else:
            X_out, y_out = X.copy(), y.copy()
            self.parents_ = np.empty((0, 2), dtype=np.int64)
        n_new = len(y_out) - len(y)
        self.provenance_ = np.array(["original"] * len(y) + ["synthetic"] * n_new, dtype=object)
        return X_out, y_out


def _resample_table(table: FaultTable, sampler) -> FaultTable:
    X, y = sampler.fit_resample(table.X, table.y)
    return FaultTable(X, y, sampler.provenance_, table.feature_names)


def undersample(table: FaultTable, config: BalanceConfig | None = None) -> FaultTable:
    config = config or BalanceConfig("undersample")
    return _resample_table(table, RandomUndersampler(seed=config.seed))


def oversample(table: FaultTable, config: BalanceConfig | None = None) -> FaultTable:
    config = config or BalanceConfig("oversample")
    return _resample_table(table, RandomOversampler(seed=config.seed))


def smote_multiclass(table: FaultTable, config: BalanceConfig | None = None) -> FaultTable:
    config = config or BalanceConfig("smote")
    return _resample_table(table, MulticlassSMOTE(k_neighbors=config.k_neighbors, seed=config.seed))


def balance(table: FaultTable, config: BalanceConfig) -> FaultTable:
    """Dispatch on ``config.strategy``; ``"none"`` tags every row original."""
    if config.strategy == "none":
        return FaultTable(table.X, table.y, np.full(len(table), "original", dtype=object))
    return {"undersample": undersample, "oversample": oversample, "smote": smote_multiclass}[
        config.strategy
    ](table, config)
