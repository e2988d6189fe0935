"""Gini decision tree, random forest and k-nearest-neighbours classifiers.

All three follow the scikit-learn estimator protocol (``get_params``,
``fit``, ``predict``, ``predict_proba``) so they can be cloned, grid
searched and cross validated like any sklearn classifier.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import _tree
from .data import STEEL_INDEX

FOREST_FORMAT = "faultinsight.forest"
FOREST_FORMAT_VERSION = 1


def gini(counts) -> float:
    """Gini impurity ``1 - sum p_i^2`` of a class-count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts must have a positive sum")
    p = counts / total
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True, eq=False)
class Tree:
    """A fitted tree as flat node arrays (root = node 0).

    ``counts`` holds the training class counts reaching each node;
    ``left == -1`` marks leaves.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    depth: np.ndarray
    impurity_decrease: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node) -> bool:
        return self.left[node] == -1

    @property
    def distribution(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)

    def apply(self, X) -> np.ndarray:
        return _tree.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict_proba(self, X) -> np.ndarray:
        return self.distribution[self.apply(X)]

    def to_dict(self, node=0) -> dict:
        out = {"counts": [float(c) for c in self.counts[node]]}
        if not self.is_leaf(node):
            out["feature"] = int(self.feature[node])
            out["threshold"] = float(self.threshold[node])
            out["left"] = self.to_dict(self.left[node])
            out["right"] = self.to_dict(self.right[node])
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> Tree:
        feature, threshold, left, right, counts, depth, dec = [], [], [], [], [], [], []

        def visit(d, level):
            node = len(feature)
            feature.append(int(d.get("feature", -1)))
            threshold.append(float(d.get("threshold", 0.0)))
            left.append(-1)
            right.append(-1)
            counts.append(d["counts"])
            depth.append(level)
            dec.append(0.0)
            if "left" in d:
                left[node] = visit(d["left"], level + 1)
                right[node] = visit(d["right"], level + 1)
            return node

        visit(doc, 0)
        tree = cls(
            np.asarray(feature, np.int64), np.asarray(threshold), np.asarray(left, np.int64),
            np.asarray(right, np.int64), np.asarray(counts, dtype=np.float64),
            np.asarray(depth, np.int64), np.asarray(dec),
        )
        # recompute gini decrease so impurity importance survives a round trip
        for node in range(tree.n_nodes):
            if not tree.is_leaf(node):
                c, l, r = tree.counts[node], tree.counts[tree.left[node]], tree.counts[tree.right[node]]
                tree.impurity_decrease[node] = (
                    c.sum() * gini(c) - l.sum() * gini(l) - r.sum() * gini(r)
                )
        return tree


def _grow(X, y_codes, sample_idx, n_classes, mtry, min_node_size, max_depth, seed) -> Tree:
    out = _tree.build_tree(
        X, y_codes, np.asarray(sample_idx, np.int64), n_classes, int(mtry),
        int(min_node_size), -1 if max_depth is None else int(max_depth), int(seed),
    )
    return Tree(*out)


def _seed_stream(seed, n):
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32).astype(np.int64)


class _ClassifierBase(ClassifierMixin, BaseEstimator):
    def _validate_fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, y_codes = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        return X, y_codes.astype(np.int64)

    def _validate_predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]


class DecisionTree(_ClassifierBase):
    """Single CART-style gini tree.

    With ``mtry=None`` every feature is searched at every split; an integer
    turns on per-node feature subsampling.
    """

    def __init__(self, mtry=None, min_node_size=1, max_depth=None, seed=0):
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y):
        X, y_codes = self._validate_fit(X, y)
        if X.shape[0] == 0:
            raise ValueError("cannot fit a tree on an empty table")
        p = X.shape[1]
        mtry = p if self.mtry is None else self.mtry
        _check_params(mtry, p, self.min_node_size)
        self.tree_ = _grow(X, y_codes, np.arange(X.shape[0]), len(self.classes_), mtry,
                           self.min_node_size, self.max_depth, self.seed)
        return self

    def predict_proba(self, X):
        X = self._validate_predict(X)
        return self.tree_.predict_proba(X)


def _check_params(mtry, p, min_node_size):
    if not 1 <= int(mtry) <= p:
        raise ValueError(f"mtry must be in [1, {p}], got {mtry}")
    if int(min_node_size) < 1:
        raise ValueError("min_node_size must be >= 1")


class RandomForest(_ClassifierBase):
    """Bagged gini trees with per-split feature subsampling.

    Parameters
    ----------
    n_trees : int, default=186
    mtry : int, default=5
        Candidate features drawn at every split.
    min_node_size : int, default=1
        Nodes holding this many rows or fewer are not split.
    max_depth : int or None, default=None
    seed : int, default=0

    Attributes
    ----------
    trees_ : list of Tree
    inbag_counts_ : ndarray of shape (n_trees, n_rows)
        Bootstrap multiplicity of each training row per tree.
    oob_error_ : float
        Misclassification rate of out-of-bag majority votes.
    feature_importances_ : ndarray
        Normalised mean gini decrease.
    """

    def __init__(self, n_trees=186, mtry=5, min_node_size=1, max_depth=None, seed=0):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.max_depth = max_depth
        self.seed = seed

    def fit(self, X, y):
        X, y_codes = self._validate_fit(X, y)
        if len(self.classes_) < 2:
            raise ValueError("random forest needs at least two classes")
        if int(self.n_trees) < 1:
            raise ValueError("n_trees must be >= 1")
        n, p = X.shape
        _check_params(self.mtry, p, self.min_node_size)
        n_classes = len(self.classes_)
        seeds = _seed_stream(self.seed, 2 * int(self.n_trees))
        trees, inbag = [], np.zeros((int(self.n_trees), n), dtype=np.int32)
        for t in range(int(self.n_trees)):
            boot = np.random.default_rng(seeds[2 * t]).integers(0, n, size=n)
            inbag[t] = np.bincount(boot, minlength=n)
            trees.append(_grow(X, y_codes, boot, n_classes, self.mtry, self.min_node_size,
                               self.max_depth, seeds[2 * t + 1]))
        self.trees_ = trees
        self.inbag_counts_ = inbag
        self._set_oob(X, y_codes)
        return self

    def _set_oob(self, X, y_codes):
        n_classes = len(self.classes_)
        votes = np.zeros((X.shape[0], n_classes))
        for tree, inbag in zip(self.trees_, self.inbag_counts_):
            oob = np.flatnonzero(inbag == 0)
            if oob.size:
                pred = np.argmax(tree.predict_proba(X[oob]), axis=1)
                votes[oob, pred] += 1
        seen = votes.sum(axis=1) > 0
        self.oob_votes_ = votes
        self.oob_decision_ = np.where(seen, np.argmax(votes, axis=1), -1)
        self.oob_error_ = float(np.mean(self.oob_decision_[seen] != y_codes[seen])) if seen.any() else float("nan")

    def oob_indices(self, t) -> np.ndarray:
        return np.flatnonzero(self.inbag_counts_[t] == 0)

    def predict_proba(self, X):
        X = self._validate_predict(X)
        proba = np.zeros((X.shape[0], len(self.classes_)))
        for tree in self.trees_:
            proba += tree.predict_proba(X)
        return proba / len(self.trees_)

    def predict_votes(self, X):
        """Per-class count of trees voting for each class."""
        X = self._validate_predict(X)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        rows = np.arange(X.shape[0])
        for tree in self.trees_:
            votes[rows, np.argmax(tree.predict_proba(X), axis=1)] += 1
        return votes

    @property
    def feature_importances_(self):
        check_is_fitted(self)
        imp = np.zeros(self.n_features_in_)
        for tree in self.trees_:
            split = tree.left != -1
            np.add.at(imp, tree.feature[split], tree.impurity_decrease[split])
        total = imp.sum()
        return imp / total if total > 0 else imp

    # -- serialization -------------------------------------------------

    def to_dict(self, feature_names=None) -> dict:
        check_is_fitted(self)
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_FORMAT_VERSION,
            "params": self.get_params(),
            "classes": [c.item() if hasattr(c, "item") else c for c in self.classes_],
            "n_features": int(self.n_features_in_),
            "feature_names": list(feature_names) if feature_names is not None else None,
            "oob_error": self.oob_error_,
            "trees": [
                {"oob": self.oob_indices(t).tolist(), "inbag": _sparse_inbag(self.inbag_counts_[t]),
                 "root": tree.to_dict()}
                for t, tree in enumerate(self.trees_)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> RandomForest:
        if doc.get("format") != FOREST_FORMAT:
            raise ValueError(f"not a forest document: format={doc.get('format')!r}")
        if doc.get("version") != FOREST_FORMAT_VERSION:
            raise ValueError(f"unsupported forest version {doc.get('version')!r}")
        model = cls(**doc["params"])
        model.classes_ = np.asarray(doc["classes"])
        model.n_features_in_ = int(doc["n_features"])
        model.trees_ = [Tree.from_dict(t["root"]) for t in doc["trees"]]
        n = max((max(t["inbag"]["rows"], default=-1) for t in doc["trees"]), default=-1) + 1
        n = max(n, max((max(t["oob"], default=-1) for t in doc["trees"]), default=-1) + 1)
        inbag = np.zeros((len(model.trees_), n), dtype=np.int32)
        for t, tdoc in enumerate(doc["trees"]):
            inbag[t, tdoc["inbag"]["rows"]] = tdoc["inbag"]["counts"]
        model.inbag_counts_ = inbag
        model.oob_error_ = doc.get("oob_error")
        model.feature_names_ = doc.get("feature_names")
        return model

    def save(self, path, feature_names=None):
        Path(path).write_text(json.dumps(self.to_dict(feature_names), separators=(",", ":")))

    @classmethod
    def load(cls, path) -> RandomForest:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _sparse_inbag(row):
    nz = np.flatnonzero(row)
    return {"rows": nz.tolist(), "counts": row[nz].tolist()}


class KNearestNeighbors(_ClassifierBase):
    """k-NN voting on z-scored numeric columns plus a 0/1 categorical mismatch.

    Distance ties are broken toward the lower training-row index.
    """

    def __init__(self, k=5, categorical=(STEEL_INDEX,), batch_size=512):
        self.k = k
        self.categorical = categorical
        self.batch_size = batch_size

    def fit(self, X, y):
        X, y_codes = self._validate_fit(X, y)
        if X.shape[0] == 0:
            raise ValueError("empty training set")
        if not 1 <= int(self.k) <= X.shape[0]:
            raise ValueError(f"k must be in [1, {X.shape[0]}], got {self.k}")
        cat = np.zeros(X.shape[1], dtype=bool)
        cat[list(self.categorical)] = True
        self.numeric_mask_ = ~cat
        self.mean_ = X[:, ~cat].mean(axis=0)
        sd = X[:, ~cat].std(axis=0)
        sd[sd == 0] = 1.0
        self.scale_ = sd
        self.X_num_ = (X[:, ~cat] - self.mean_) / self.scale_
        self.X_cat_ = X[:, cat]
        self.y_codes_ = y_codes
        return self

    def kneighbors(self, X) -> np.ndarray:
        X = self._validate_predict(X)
        k = int(self.k)
        Q_num = (X[:, self.numeric_mask_] - self.mean_) / self.scale_
        Q_cat = X[:, ~self.numeric_mask_]
        out = np.empty((X.shape[0], k), dtype=np.int64)
        ref_sq = np.einsum("ij,ij->i", self.X_num_, self.X_num_)
        for start in range(0, X.shape[0], self.batch_size):
            q = Q_num[start:start + self.batch_size]
            d2 = np.einsum("ij,ij->i", q, q)[:, None] + ref_sq[None, :] - 2.0 * q @ self.X_num_.T
            np.maximum(d2, 0.0, out=d2)
            if Q_cat.shape[1]:
                d2 += (Q_cat[start:start + self.batch_size, None, :] != self.X_cat_[None, :, :]).sum(axis=2)
            # rounding guards tie-breaking against last-bit noise from the expansion
            d2 = np.round(d2, 9)
            out[start:start + len(q)] = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return out

    def predict_proba(self, X):
        nbrs = self.kneighbors(X)
        n_classes = len(self.classes_)
        proba = np.zeros((nbrs.shape[0], n_classes))
        labels = self.y_codes_[nbrs]
        for c in range(n_classes):
            proba[:, c] = (labels == c).sum(axis=1)
        return proba / nbrs.shape[1]


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 186
    mtry: int = 5
    min_node_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.n_trees, self.mtry, self.min_node_size) < 1:
            raise ValueError("hyperparameters must be positive")


def tune_forest(table, grid: dict, n_folds: int = 10, seed: int = 0, return_scores: bool = False):
    """Exhaustive grid search of forest hyperparameters by CV accuracy.

    ``grid`` maps ``n_trees`` / ``mtry`` / ``min_node_size`` to candidate
    lists.  The best mean accuracy wins; ties go to fewer trees, then smaller
    mtry, then grid order.
    """
    from .evaluation import cross_validate, make_folds

    keys = ("n_trees", "mtry", "min_node_size")
    values = [list(grid.get(k, [getattr(HyperParams, k)])) for k in keys]
    if not all(values):
        raise ValueError("grid must be non-empty")
    plan = make_folds(table, n_folds=n_folds, seed=seed)
    scores = []
    for order, combo in enumerate(itertools.product(*values)):
        params = dict(zip(keys, combo))
        acc = cross_validate(table, RandomForest(seed=seed, **params), plan).accuracy
        scores.append((acc, params, order))
    best = max(scores, key=lambda s: (s[0], -s[1]["n_trees"], -s[1]["mtry"], -s[2]))
    chosen = HyperParams(seed=seed, **best[1])
    if return_scores:
        return chosen, [(p, a) for a, p, _ in scores]
    return chosen


def tune_knn(table, k_values=range(1, 16), n_folds=10, seed=0):
    """Pick k by CV accuracy; ties go to the smaller k."""
    from .evaluation import cross_validate, make_folds

    plan = make_folds(table, n_folds=n_folds, seed=seed)
    best_k, best_acc = None, -math.inf
    for k in k_values:
        acc = cross_validate(table, KNearestNeighbors(k=k), plan).accuracy
        if acc > best_acc:
            best_k, best_acc = k, acc
    return best_k, best_acc
