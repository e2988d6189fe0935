"""Stratified k-fold evaluation, confusion matrices and the learner x dataset grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from sklearn.base import clone

from .balancing import BalanceConfig, balance
from .data import FAULTS, FaultTable


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[np.ndarray, ...]
    seed: int
    n_rows: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def train_test(self, k):
        test = self.folds[k]
        train = np.concatenate([f for j, f in enumerate(self.folds) if j != k])
        return np.sort(train), test


def make_folds(table: FaultTable, n_folds: int = 10, seed: int = 0) -> FoldPlan:
    """Stratified partition of the rows into ``n_folds`` folds.

    Each class is shuffled and dealt round-robin, continuing from where the
    previous class stopped, so per-class and total fold sizes both differ by
    at most one.
    """
    counts = np.bincount(table.y, minlength=len(FAULTS))
    for code, c in enumerate(counts):
        if 0 < c < n_folds:
            raise ValueError(f"class {FAULTS[code]} has {c} rows, fewer than {n_folds} folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(table), dtype=np.int64)
    offset = 0
    for code in range(len(FAULTS)):
        members = np.flatnonzero(table.y == code)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        assign[members] = (offset + np.arange(members.size)) % n_folds
        offset += members.size
    folds = tuple(np.flatnonzero(assign == k) for k in range(n_folds))
    return FoldPlan(folds, seed, len(table))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with true classes in rows and predictions in columns."""

    counts: np.ndarray
    labels: tuple[str, ...] = FAULTS

    @classmethod
    def from_predictions(cls, y_true, y_pred, labels=FAULTS):
        n = len(labels)
        mat = np.zeros((n, n), dtype=np.int64)
        np.add.at(mat, (np.asarray(y_true), np.asarray(y_pred)), 1)
        return cls(mat, tuple(labels))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total)

    @property
    def per_class_error(self) -> dict[str, float]:
        """1 - recall for every class with at least one true row."""
        rows = self.counts.sum(axis=1)
        return {
            lab: float(1 - self.counts[i, i] / rows[i])
            for i, lab in enumerate(self.labels) if rows[i] > 0
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.counts, index=list(self.labels), columns=list(self.labels))

    def to_csv(self) -> str:
        lines = ["true," + ",".join(self.labels)]
        for lab, row in zip(self.labels, self.counts):
            lines.append(lab + "," + ",".join(str(int(v)) for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> ConfusionMatrix:
        rows = [ln.split(",") for ln in text.strip().splitlines()]
        labels = tuple(rows[0][1:])
        return cls(np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64), labels)


@dataclass
class CVResult:
    accuracy: float
    confusion: ConfusionMatrix
    per_class_error: dict[str, float]
    predictions: np.ndarray
    fold_accuracy: list[float] = field(default_factory=list)


def cross_validate(table: FaultTable, estimator, plan: FoldPlan,
                   balance_within_folds: BalanceConfig | None = None) -> CVResult:
    """Fit a fresh clone of ``estimator`` per fold and score the held-out rows.

    Labels are passed to the estimator as integer fault codes.  With
    ``balance_within_folds`` the training part of each fold is rebalanced
    before fitting and the held-out part is left untouched.
    """
    if plan.n_rows != len(table):
        raise ValueError("fold plan was built for a different table")
    pred = np.full(len(table), -1, dtype=np.int64)
    fold_acc = []
    for k in range(plan.n_folds):
        train_idx, test_idx = plan.train_test(k)
        train = table.subset(train_idx)
        if balance_within_folds is not None:
            train = balance(train, balance_within_folds)
        model = clone(estimator).fit(train.X, train.y)
        pred[test_idx] = model.predict(table.X[test_idx])
        fold_acc.append(float(np.mean(pred[test_idx] == table.y[test_idx])))
    cm = ConfusionMatrix.from_predictions(table.y, pred)
    return CVResult(cm.accuracy, cm, cm.per_class_error, pred, fold_acc)


def benchmark(datasets: dict[str, FaultTable], learners: dict, seed: int = 0,
              n_folds: int = 10) -> pd.DataFrame:
    """Accuracy of every learner on every dataset.

    Fold plans for all datasets are drawn from the same seed.  Returns a
    frame with learners as rows and datasets as columns.
    """
    grid = pd.DataFrame(index=list(learners), columns=list(datasets), dtype=float)
    for dname, table in datasets.items():
        plan = make_folds(table, n_folds=n_folds, seed=seed)
        for lname, est in learners.items():
            grid.loc[lname, dname] = cross_validate(table, est, plan).accuracy
    grid.index.name = "learner"
    return grid
