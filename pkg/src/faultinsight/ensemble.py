"""Rule table with first-match semantics and a random-forest fallback.

Rules from three sources go into one table: forest paths, association
rules and hand-written rules read from a JSON file.  Each row holds one slot
per feature, or a wildcard.  A row is predicted by the highest-priority
matching rule, and by the fallback forest when no rule matches.

Manual rules file::

    {"format": "faultinsight.manual_rules", "version": 1,
     "rows": [
       {"id": "M-1", "fault": "Bumps", "confidence": 0.9, "lift": 1.2,
        "slots": {"Steel_Plate_Thickness": {"lo": null, "hi": 60},
                  "TypeOfSteel": ["A300"],
                  "Pixels_Areas": "-"}}
     ]}

An interval slot is ``{"lo", "hi", "lo_closed", "hi_closed"}``.  A null
bound is infinite, ``lo_closed`` defaults to true and ``hi_closed`` to
false, which gives ``[lo, hi)``.  A list is a level set.  ``"-"`` and
omitted features are wildcards.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .balancing import BalanceConfig, balance
from .conditions import Condition, Interval, LevelSet
from .data import FAULTS, FEATURES, FaultTable
from .evaluation import ConfusionMatrix, FoldPlan, make_folds
from .learners import RandomForest
from .rules_assoc import mine_table
from .rules_forest import harvest_paths, prune_rules, score_and_select

ENSEMBLE_FORMAT = "faultinsight.ensemble"
MANUAL_FORMAT = "faultinsight.manual_rules"
REPORT_FORMAT = "faultinsight.ensemble_report"
FORMAT_VERSION = 1
WILDCARD = "-"
PROVENANCE = ("forest", "assoc", "manual")
FALLBACK = "fallback"


@dataclass
class RuleRow:
    condition: Condition
    fault: str
    confidence: float
    lift: float
    provenance: str
    rule_id: str = ""

    @property
    def length(self) -> int:
        return len(self.condition)

    def cells(self) -> list[str]:
        """One printable cell per feature, ``-`` for wildcards."""
        names = self.condition.feature_names
        return [self.condition.slots[j].text(names[j]).removeprefix(names[j]).lstrip("=")
                if j in self.condition.slots else WILDCARD for j in range(len(names))]

    def to_dict(self) -> dict:
        names = self.condition.feature_names
        slots = {}
        for j in sorted(self.condition.slots):
            s = self.condition.slots[j]
            slots[names[j]] = sorted(s.levels) if isinstance(s, LevelSet) else s.to_dict()
        return {"id": self.rule_id, "fault": self.fault, "confidence": self.confidence,
                "lift": self.lift, "provenance": self.provenance, "slots": slots}

    @classmethod
    def from_dict(cls, d, feature_names=FEATURES, provenance=None) -> RuleRow:
        return cls(_condition_from_slots(d.get("slots", {}), feature_names), d["fault"],
                   float(d.get("confidence", 1.0)), float(d.get("lift", 1.0)),
                   provenance or d.get("provenance", "manual"), d.get("id", ""))


def _condition_from_slots(slots: dict, feature_names) -> Condition:
    cond = Condition(feature_names=feature_names)
    for name, spec in slots.items():
        if name not in feature_names:
            raise ValueError(f"unknown feature {name!r}")
        if spec == WILDCARD or spec is None:
            continue
        if isinstance(spec, (list, tuple)):
            slot = LevelSet(frozenset(spec))
        elif isinstance(spec, dict) and "levels" in spec:
            slot = LevelSet(frozenset(spec["levels"]))
        else:
            slot = Interval.from_dict(spec)
        cond.add(name, slot)
    return cond


class RuleTable:
    """Rules in resolved priority order."""

    def __init__(self, rows: list[RuleRow], feature_names=FEATURES):
        self.rows = list(rows)
        self.feature_names = tuple(feature_names)

    def __len__(self):
        return len(self.rows)

    def match(self, X) -> np.ndarray:
        """Index of the first matching row per input row, ``-1`` when none match."""
        X = np.asarray(X, dtype=np.float64)
        first = np.full(X.shape[0], -1, dtype=np.int64)
        for i, row in enumerate(self.rows):
            open_ = first < 0
            if not open_.any():
                break
            hit = np.zeros_like(open_)
            hit[open_] = row.condition.mask(X[open_])
            first[hit] = i
        return first

    def to_frame(self):
        import pandas as pd

        data = [r.cells() + [r.fault, r.confidence, r.lift, r.provenance] for r in self.rows]
        cols = list(self.feature_names) + ["Result", "confidence", "lift", "provenance"]
        return pd.DataFrame(data, columns=cols, index=[r.rule_id for r in self.rows])

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, doc) -> RuleTable:
        names = tuple(doc.get("feature_names", FEATURES))
        return cls([RuleRow.from_dict(d, names) for d in doc["rows"]], names)


def compile_rule_table(rows, feature_names=FEATURES) -> RuleTable:
    """Order rules by confidence, lift, fewer slots, provenance, then input order.

    Rows with no slots are rejected, as are unknown provenance tags and
    conditions built over a different schema.
    """
    names = tuple(feature_names)
    rows = list(rows)
    for r in rows:
        if r.provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {r.provenance!r}")
        if r.condition.feature_names != names:
            raise ValueError(f"rule {r.rule_id or r.condition} uses a different feature schema")
        if len(r.condition) == 0:
            raise ValueError(f"rule {r.rule_id or '?'} has only wildcards")
        if r.fault not in FAULTS and names == FEATURES:
            raise ValueError(f"unknown fault {r.fault!r}")
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].confidence, -rows[i].lift, rows[i].length,
                                                    PROVENANCE.index(rows[i].provenance), i))
    return RuleTable([rows[i] for i in order], names)


def load_manual_rules(path, feature_names=FEATURES) -> list[RuleRow]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MANUAL_FORMAT:
        raise ValueError(f"{path}: not a manual rules document")
    rows = []
    for n, d in enumerate(doc["rows"], start=1):
        row = RuleRow.from_dict(d, feature_names, provenance="manual")
        row.rule_id = row.rule_id or f"M-{n}"
        rows.append(row)
    return rows


def rows_from_forest_rules(rules, class_rates: dict[str, float]) -> list[RuleRow]:
    """Confidence is ``1 - err``; lift divides it by the predicted class's base rate."""
    return [RuleRow(r.condition, r.prediction, 1.0 - r.err, (1.0 - r.err) / class_rates[r.prediction],
                    "forest", r.rule_id) for r in rules]


def rows_from_assoc(mined) -> list[RuleRow]:
    return [RuleRow(mined.condition(r), r.consequent, r.confidence, r.lift, "assoc", r.rule_id)
            for r in mined.rules]


def rows_from_document(doc, feature_names=FEATURES) -> list[RuleRow]:
    """Rule rows from any rules JSON this package writes (forest, arm, manual, ensemble)."""
    fmt = doc.get("format")
    if fmt == "faultinsight.rules":
        return [RuleRow(Condition.from_list(d["slots"], feature_names), d["pred"], 1.0 - d["err"],
                        d.get("lift", math.nan), "forest", d["id"]) for d in doc["rules"]]
    if fmt == "faultinsight.arm":
        return [RuleRow(Condition.from_list(d["slots"], feature_names), d["consequent"], d["confidence"],
                        d["lift"], "assoc", d["id"]) for d in doc["rules"]]
    if fmt == MANUAL_FORMAT:
        return [RuleRow.from_dict(d, feature_names, provenance="manual") for d in doc["rows"]]
    if fmt == ENSEMBLE_FORMAT:
        return RuleTable.from_dict(doc["table"]).rows
    raise ValueError(f"unrecognised rules document format {fmt!r}")


@dataclass
class MiningConfig:
    """How rules are mined and which of them may enter the table."""

    forest_rules: bool = True
    assoc_rules: bool = True
    forest_k: int = 20
    forest_max_depth: int = 6
    prune_delta: float = 0.01
    bins: int = 20
    min_support: float = 0.01
    min_confidence: float = 0.85
    max_len: int = 5
    assoc_top_k: int = 10
    # gate applied before a mined rule may override the fallback
    min_rule_confidence: float = 1.0
    min_rule_count: int = 20

    def to_dict(self) -> dict:
        return asdict(self)


def mine_rule_rows(X, y_codes, forest: RandomForest, config: MiningConfig,
                   feature_names=FEATURES) -> list[RuleRow]:
    """Forest and association rules mined on ``(X, y)`` that pass the confidence gate."""
    X = np.asarray(X, dtype=np.float64)
    y_codes = np.asarray(y_codes)
    labels = np.asarray(FAULTS, dtype=object)[y_codes]
    rates = {f: float(np.mean(labels == f)) for f in FAULTS}
    rows: list[RuleRow] = []
    max_err = 1.0 - config.min_rule_confidence
    if config.forest_rules:
        cand = prune_rules(harvest_paths(forest, config.forest_max_depth, feature_names), X, y_codes,
                           config.prune_delta)
        cand = [r for r in cand if r.err <= max_err + 1e-12 and r.n_covered >= config.min_rule_count]
        if cand:
            rows += rows_from_forest_rules(score_and_select(cand, X, y_codes, config.forest_k), rates)
    if config.assoc_rules:
        mined = mine_table(X, y_codes, bins=config.bins, min_support=config.min_support,
                           min_confidence=max(config.min_confidence, config.min_rule_confidence),
                           max_len=config.max_len, top_k=config.assoc_top_k, feature_names=feature_names)
        rows += [row for row, r in zip(rows_from_assoc(mined), mined.rules)
                 if r.count >= config.min_rule_count]
    return rows


@dataclass
class EnsemblePrediction:
    labels: np.ndarray
    decided_by: list[str]
    fire_counts: dict[str, int] = field(default_factory=dict)

    @property
    def fallback_count(self) -> int:
        return self.fire_counts.get(FALLBACK, 0)


class RuleEnsembleClassifier(ClassifierMixin, BaseEstimator):
    """First-match rule table in front of a random forest.

    With ``rules=None`` rules are mined from the training data on ``fit``.
    Otherwise the given rows are used as they are, and ``manual_rules`` rows
    are added in either case.
    """

    def __init__(self, n_trees=186, mtry=5, min_node_size=1, seed=0, mining=None, rules=None,
                 manual_rules=None, feature_names=FEATURES):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.seed = seed
        self.mining = mining
        self.rules = rules
        self.manual_rules = manual_rules
        self.feature_names = feature_names

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if y.dtype.kind not in "iu":
            y = np.array([FAULTS.index(v) for v in y])
        self.classes_ = np.unique(y)
        self.fallback_ = RandomForest(self.n_trees, self.mtry, self.min_node_size, seed=self.seed).fit(X, y)
        if self.rules is None:
            rows = mine_rule_rows(X, y, self.fallback_, self.mining or MiningConfig(), self.feature_names)
        else:
            rows = list(self.rules)
        rows += list(self.manual_rules or [])
        self.table_ = compile_rule_table(rows, self.feature_names)
        return self

    def predict_explain(self, X) -> EnsemblePrediction:
        check_is_fitted(self)
        X = np.asarray(X, dtype=np.float64)
        first = self.table_.match(X)
        pred = np.empty(X.shape[0], dtype=self.classes_.dtype)
        open_ = first < 0
        if open_.any():
            pred[open_] = self.fallback_.predict(X[open_])
        decided = [FALLBACK] * X.shape[0]
        counts = {FALLBACK: int(open_.sum())}
        for i in np.flatnonzero(~open_):
            row = self.table_.rows[first[i]]
            pred[i] = FAULTS.index(row.fault)
            decided[i] = row.rule_id
        for r in self.table_.rows:
            counts.setdefault(r.rule_id, 0)
        for k in first[~open_]:
            counts[self.table_.rows[k].rule_id] += 1
        return EnsemblePrediction(pred, decided, counts)

    def predict(self, X):
        return self.predict_explain(X).labels

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {"format": ENSEMBLE_FORMAT, "version": FORMAT_VERSION, "table": self.table_.to_dict(),
                "model": self.fallback_.to_dict(list(self.feature_names))}

    @classmethod
    def from_dict(cls, doc) -> RuleEnsembleClassifier:
        if doc.get("format") != ENSEMBLE_FORMAT:
            raise ValueError("not an ensemble document")
        forest = RandomForest.from_dict(doc["model"])
        table = RuleTable.from_dict(doc["table"])
        est = cls(forest.n_trees, forest.mtry, forest.min_node_size, forest.seed, rules=table.rows,
                  feature_names=table.feature_names)
        est.fallback_, est.table_, est.classes_ = forest, table, forest.classes_
        return est

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> RuleEnsembleClassifier:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class EnsembleReport:
    accuracy: float
    confusion: ConfusionMatrix
    per_class_error: dict
    fallback_accuracy: float
    fallback_confusion: ConfusionMatrix
    rule_fraction: float
    fire_counts: dict
    mine_on_full: bool
    n_rows: int

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT, "version": FORMAT_VERSION,
            "accuracy": self.accuracy, "per_class_error": self.per_class_error,
            "fallback_accuracy": self.fallback_accuracy, "rule_fraction": self.rule_fraction,
            "fire_counts": self.fire_counts, "mine_on_full": self.mine_on_full, "n_rows": self.n_rows,
            "confusion": self.confusion.counts.tolist(),
            "fallback_confusion": self.fallback_confusion.counts.tolist(),
        }


def evaluate_ensemble(table: FaultTable, balance_config: BalanceConfig | None = None,
                      plan: FoldPlan | None = None, mining: MiningConfig | None = None,
                      mine_on_full: bool = False, seed: int = 0, n_trees: int = 186, mtry: int = 5,
                      min_node_size: int = 1, manual_rules=None) -> EnsembleReport:
    """Cross-validated accuracy of the ensemble and of its bare fallback forest.

    ``table`` is balanced with ``balance_config`` first.  By default rules
    are mined inside each training split.  With ``mine_on_full`` they are
    mined once on the whole table, which leaks the held-out rows into the
    rules.  The fallback forest is always fit per fold.
    """
    mining = mining or MiningConfig()
    data = balance(table, balance_config) if balance_config is not None else table
    plan = plan or make_folds(data, 10, seed)
    if plan.n_rows != len(data):
        raise ValueError("fold plan was built for a different table")
    shared = None
    if mine_on_full:
        full_forest = RandomForest(n_trees, mtry, min_node_size, seed=seed).fit(data.X, data.y)
        shared = mine_rule_rows(data.X, data.y, full_forest, mining)
    pred = np.full(len(data), -1, dtype=np.int64)
    base = np.full(len(data), -1, dtype=np.int64)
    fires: dict[str, int] = {}
    for k in range(plan.n_folds):
        train_idx, test_idx = plan.train_test(k)
        est = RuleEnsembleClassifier(n_trees, mtry, min_node_size, seed=seed, mining=mining,
                                     rules=shared, manual_rules=manual_rules)
        est.fit(data.X[train_idx], data.y[train_idx])
        out = est.predict_explain(data.X[test_idx])
        pred[test_idx] = out.labels
        base[test_idx] = est.fallback_.predict(data.X[test_idx])
        for rid, c in out.fire_counts.items():
            key = rid if rid == FALLBACK else f"fold{k}:{rid}"
            fires[key] = fires.get(key, 0) + c
    cm = ConfusionMatrix.from_predictions(data.y, pred)
    fb = ConfusionMatrix.from_predictions(data.y, base)
    rule_fraction = 1.0 - fires.get(FALLBACK, 0) / len(data)
    return EnsembleReport(cm.accuracy, cm, cm.per_class_error, fb.accuracy, fb, rule_fraction, fires,
                          mine_on_full, len(data))
