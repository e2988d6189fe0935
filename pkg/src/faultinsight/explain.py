"""Model-agnostic explanations for any classifier exposing ``predict_proba``.

Models are expected to be fitted on integer fault codes or on fault names;
either way ``model.classes_`` is used to line probability columns up with
fault names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components

from .data import FAULTS, FEATURES, STEEL_COLUMN, STEEL_LEVELS
from .medoids import Medoid

PROFILE_FORMAT = "faultinsight.profile"
BREAKDOWN_FORMAT = "faultinsight.breakdown"
IMPORTANCE_FORMAT = "faultinsight.importance"
FORMAT_VERSION = 1
PROBA_FLOOR = 1e-15
CATEGORICAL = {STEEL_COLUMN: STEEL_LEVELS}


def class_names(model) -> list[str]:
    out = []
    for c in model.classes_:
        if isinstance(c, (int, np.integer)):
            out.append(FAULTS[int(c)])
        else:
            out.append(str(c))
    return out


def class_index(model, label) -> int:
    names = class_names(model)
    if isinstance(label, (int, np.integer)):
        label = FAULTS[int(label)]
    try:
        return names.index(label)
    except ValueError:
        raise ValueError(f"model has no class {label!r}") from None


def _feature_index(feature, feature_names):
    if isinstance(feature, (int, np.integer)):
        return int(feature)
    try:
        return list(feature_names).index(feature)
    except ValueError:
        raise ValueError(f"unknown feature {feature!r}") from None


def _anchor_row(anchor) -> np.ndarray:
    if isinstance(anchor, Medoid):
        return anchor.as_row()
    return np.asarray(anchor, dtype=np.float64).copy()


def log_loss(proba, y_idx) -> float:
    p = proba[np.arange(len(y_idx)), y_idx]
    return float(-np.mean(np.log(np.maximum(p, PROBA_FLOOR))))


# -- importance ---------------------------------------------------------------

@dataclass
class ImportanceReport:
    feature_names: list[str]
    mean_loss: np.ndarray
    ranks: np.ndarray
    baseline_loss: float
    losses: np.ndarray  # (n_features, B) loss increase per repeat

    def order(self) -> list[int]:
        """Feature indices from rank 1 downward."""
        return [int(i) for i in np.argsort(self.ranks)]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"feature": self.feature_names, "mean_loss": self.mean_loss, "rank": self.ranks}
        ).sort_values("rank").reset_index(drop=True)

    def to_dict(self) -> dict:
        return {
            "format": IMPORTANCE_FORMAT, "version": FORMAT_VERSION,
            "baseline_loss": self.baseline_loss,
            "features": [
                {"feature": f, "mean_loss": float(m), "rank": int(r), "losses": [float(v) for v in ls]}
                for f, m, r, ls in zip(self.feature_names, self.mean_loss, self.ranks, self.losses)
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> ImportanceReport:
        feats = doc["features"]
        return cls(
            [d["feature"] for d in feats], np.array([d["mean_loss"] for d in feats]),
            np.array([d["rank"] for d in feats]), doc["baseline_loss"],
            np.array([d["losses"] for d in feats]),
        )


def permutation_importance(model, X, y, n_repeats: int = 10, seed: int = 0,
                           feature_names=FEATURES) -> ImportanceReport:
    """Mean increase in multiclass log-loss when one column is shuffled.

    Every feature gets ``n_repeats`` independent permutations of its column.
    Rank 1 is the largest mean increase; ties keep schema order.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y_idx = np.array([class_index(model, v) for v in np.asarray(y)])
    base = log_loss(model.predict_proba(X), y_idx)
    rng = np.random.default_rng(seed)
    p = X.shape[1]
    losses = np.zeros((p, n_repeats))
    Xp = X.copy()
    for j in range(p):
        for b in range(n_repeats):
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            losses[j, b] = log_loss(model.predict_proba(Xp), y_idx) - base
        Xp[:, j] = X[:, j]
    mean = losses.mean(axis=1)
    order = np.lexsort((np.arange(p), -mean))
    ranks = np.empty(p, dtype=np.int64)
    ranks[order] = np.arange(1, p + 1)
    return ImportanceReport(list(feature_names), mean, ranks, base, losses)


# -- correlation ----------------------------------------------------------------

@dataclass
class CorrelationReport:
    matrix: pd.DataFrame
    threshold: float
    groups: list[list[str]]
    flagged: list[str]
    zero_variance: list[str]


def correlation_filter(X, feature_names, threshold: float = 0.90) -> CorrelationReport:
    """Find groups of features whose pairwise ``|r|`` exceeds ``threshold``.

    ``groups`` are the connected components (size >= 2) of the graph with an
    edge for every such pair.  ``flagged`` is the set to drop so that no pair
    above the threshold survives: repeatedly take the most correlated
    remaining pair and drop whichever member has the larger mean ``|r|`` to
    the other remaining features.  Zero-variance columns are reported and
    left out of both.
    """
    X = np.asarray(X, dtype=np.float64)
    names = list(feature_names)
    sd = X.std(axis=0)
    zero_var = [names[j] for j in np.flatnonzero(sd == 0)]
    keep = np.flatnonzero(sd > 0)
    kept = [names[j] for j in keep]
    r = np.corrcoef(X[:, keep], rowvar=False) if keep.size > 1 else np.ones((keep.size, keep.size))
    a = np.abs(r)
    np.fill_diagonal(a, 0.0)
    adj = a > threshold
    n_comp, comp = connected_components(adj, directed=False)
    groups = []
    for c in range(n_comp):
        members = np.flatnonzero(comp == c)
        if members.size > 1:
            groups.append([kept[m] for m in members])

    remaining = list(range(len(kept)))
    flagged = []
    while len(remaining) > 1:
        sub = a[np.ix_(remaining, remaining)]
        if sub.max() <= threshold:
            break
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        mean_i = sub[i].sum() / (len(remaining) - 1)
        mean_j = sub[j].sum() / (len(remaining) - 1)
        drop = remaining[i] if mean_i > mean_j else remaining[j]
        flagged.append(kept[drop])
        remaining.remove(drop)
    return CorrelationReport(pd.DataFrame(r, index=kept, columns=kept), threshold, groups, flagged, zero_var)


# -- profiles ----------------------------------------------------------------------

@dataclass
class Profile:
    """CP or PD curve: class probabilities along a grid of one feature."""

    kind: str
    feature: str
    grid: np.ndarray
    values: np.ndarray  # (len(grid), n_classes)
    classes: list[str]
    rug: np.ndarray
    anchor: dict | None = None
    anchor_fault: str | None = None
    n_background: int | None = None
    categorical_levels: list[str] | None = None

    def curve(self, label) -> np.ndarray:
        return self.values[:, self.classes.index(label)]

    def to_dict(self) -> dict:
        return {
            "format": PROFILE_FORMAT, "version": FORMAT_VERSION, "kind": self.kind,
            "feature": self.feature, "classes": list(self.classes),
            "grid": [float(g) for g in self.grid],
            "categorical_levels": self.categorical_levels,
            "values": [[float(v) for v in row] for row in self.values],
            "rug": [float(v) for v in self.rug],
            "anchor": self.anchor, "anchor_fault": self.anchor_fault,
            "n_background": self.n_background,
        }

    @classmethod
    def from_dict(cls, doc) -> Profile:
        if doc.get("format") != PROFILE_FORMAT:
            raise ValueError("not a profile document")
        return cls(doc["kind"], doc["feature"], np.array(doc["grid"]), np.array(doc["values"]),
                   list(doc["classes"]), np.array(doc["rug"]), doc.get("anchor"),
                   doc.get("anchor_fault"), doc.get("n_background"), doc.get("categorical_levels"))


def _grid(values, feature, grid_size, extra=None):
    if feature in CATEGORICAL:
        return np.arange(len(CATEGORICAL[feature]), dtype=np.float64)
    lo, hi = float(np.min(values)), float(np.max(values))
    grid = np.linspace(lo, hi, grid_size)
    if extra is not None:
        grid = np.append(grid, extra)
    return np.unique(grid)


def ceteris_paribus(model, anchor, feature, data, grid_size: int = 101,
                    feature_names=FEATURES) -> Profile:
    """Predictions for ``anchor`` as one feature sweeps a grid, others fixed.

    The numeric grid spans the observed range of ``feature`` in ``data`` and
    includes the anchor's own value; a categorical grid lists every level.
    """
    j = _feature_index(feature, feature_names)
    name = feature_names[j]
    data = np.asarray(data, dtype=np.float64)
    row = _anchor_row(anchor)
    grid = _grid(data[:, j], name, grid_size, extra=row[j])
    Xg = np.repeat(row[None, :], len(grid), axis=0)
    Xg[:, j] = grid
    anchor_values = anchor.values if isinstance(anchor, Medoid) else {
        f: float(v) for f, v in zip(feature_names, row)}
    return Profile(
        "CP", name, grid, model.predict_proba(Xg), class_names(model), np.sort(data[:, j]),
        anchor=anchor_values, anchor_fault=getattr(anchor, "fault", None),
        categorical_levels=list(CATEGORICAL[name]) if name in CATEGORICAL else None,
    )


def background_rows(n_rows, n_background=None, seed=0) -> np.ndarray:
    """Rows used for averaging: all of them, or a prefix of one seeded shuffle.

    Prefixes nest, so growing ``n_background`` only adds rows.
    """
    if n_background is None or n_background >= n_rows:
        return np.arange(n_rows)
    if n_background < 1:
        raise ValueError("n_background must be >= 1")
    return np.random.default_rng(seed).permutation(n_rows)[:n_background]


def partial_dependence(model, data, feature, grid_size: int = 101, n_background=None,
                       seed: int = 0, feature_names=FEATURES) -> Profile:
    """Average prediction over background rows with ``feature`` clamped to each grid value."""
    j = _feature_index(feature, feature_names)
    name = feature_names[j]
    data = np.asarray(data, dtype=np.float64)
    if n_background is not None and n_background > data.shape[0]:
        raise ValueError("n_background exceeds the number of rows")
    bg = data[background_rows(data.shape[0], n_background, seed)]
    grid = _grid(data[:, j], name, grid_size)
    values = np.empty((len(grid), len(model.classes_)))
    Xb = bg.copy()
    for g, z in enumerate(grid):
        Xb[:, j] = z
        values[g] = model.predict_proba(Xb).mean(axis=0)
    return Profile(
        "PD", name, grid, values, class_names(model), np.sort(data[:, j]),
        n_background=bg.shape[0],
        categorical_levels=list(CATEGORICAL[name]) if name in CATEGORICAL else None,
    )


# -- breakdown ----------------------------------------------------------------------

@dataclass
class Breakdown:
    target: str
    intercept: float
    prediction: float
    features: list[str]
    anchor_values: list[float]
    contributions: np.ndarray
    anchor_fault: str | None = None
    steps: np.ndarray = field(default=None, repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"feature": self.features, "value": self.anchor_values,
                             "contribution": self.contributions})

    def top(self, k=10) -> list[tuple[str, float]]:
        order = np.argsort(-np.abs(self.contributions), kind="stable")[:k]
        return [(self.features[i], float(self.contributions[i])) for i in order]

    def to_dict(self) -> dict:
        return {
            "format": BREAKDOWN_FORMAT, "version": FORMAT_VERSION, "target": self.target,
            "anchor_fault": self.anchor_fault, "intercept": self.intercept,
            "prediction": self.prediction,
            "contributions": [
                {"feature": f, "value": float(v), "contribution": float(c)}
                for f, v, c in zip(self.features, self.anchor_values, self.contributions)
            ],
        }

    @classmethod
    def from_dict(cls, doc) -> Breakdown:
        if doc.get("format") != BREAKDOWN_FORMAT:
            raise ValueError("not a breakdown document")
        cs = doc["contributions"]
        return cls(doc["target"], doc["intercept"], doc["prediction"], [c["feature"] for c in cs],
                   [c["value"] for c in cs], np.array([c["contribution"] for c in cs]),
                   doc.get("anchor_fault"))


def breakdown(model, anchor, data, target=None, ordering=None, feature_names=FEATURES) -> Breakdown:
    """Sequential additive attribution of one prediction.

    Starting from the mean prediction over ``data``, the features in
    ``ordering`` are fixed to the anchor's values one after another; each
    feature's contribution is the resulting change in the mean prediction of
    ``target``.  The final step is the anchor's own prediction, so the
    intercept plus all contributions reproduces it.
    """
    data = np.asarray(data, dtype=np.float64)
    row = _anchor_row(anchor)
    p = data.shape[1]
    if ordering is None:
        ordering = list(range(p))
    ordering = [_feature_index(f, feature_names) for f in ordering]
    if sorted(ordering) != list(range(p)):
        raise ValueError("ordering must be a permutation of all features")
    if target is None:
        if not isinstance(anchor, Medoid):
            raise ValueError("target is required when the anchor is not a medoid")
        target = anchor.fault
    t = class_index(model, target)
    steps = np.empty(p + 1)
    steps[0] = model.predict_proba(data)[:, t].mean()
    Xc = data.copy()
    for k, j in enumerate(ordering[:-1], start=1):
        Xc[:, j] = row[j]
        steps[k] = model.predict_proba(Xc)[:, t].mean()
    steps[p] = model.predict_proba(row[None, :])[0, t]
    return Breakdown(
        class_names(model)[t], float(steps[0]), float(steps[p]),
        [feature_names[j] for j in ordering], [float(row[j]) for j in ordering],
        np.diff(steps), getattr(anchor, "fault", None), steps,
    )


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj.to_dict(), indent=1))
