"""Class association rules: quantile discretisation plus level-wise apriori.

Transactions are sets of integer item ids.  Supports are counted with
Python ints used as row bitsets, so an itemset's support is the popcount
of the AND of its items' bitsets.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import combinations
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .conditions import CATEGORICAL_LEVELS, Condition, Interval, LevelSet
from .data import FAULTS, FEATURES

ARM_FORMAT = "faultinsight.arm"
ARM_FORMAT_VERSION = 1


def quantile_cuts(values, bins: int) -> np.ndarray:
    """Equal-frequency cut points.

    Cut ``i`` sits midway between the sorted values at ranks
    ``floor(n*i/bins) - 1`` and ``floor(n*i/bins)``.  Duplicate cuts and cuts
    at or below the minimum are dropped.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    s = np.sort(np.asarray(values, dtype=np.float64))
    n = s.size
    cuts = []
    for i in range(1, bins):
        k = (n * i) // bins
        if 0 < k < n:
            cuts.append(0.5 * (s[k - 1] + s[k]))
    cuts = np.unique(np.asarray(cuts))
    return cuts[cuts > s[0]] if n else cuts


class QuantileDiscretizer(TransformerMixin, BaseEstimator):
    """Map numeric columns to equal-frequency bins ``[a, b)`` and categorical columns to levels.

    ``transform`` returns an integer matrix of bin indices; ``transactions``
    turns that into item-id sets and ``item_labels_`` names every item.
    """

    def __init__(self, bins=20, feature_names=FEATURES):
        self.bins = bins
        self.feature_names = feature_names

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        names = list(self.feature_names)
        self.cuts_ = []
        self.item_offset_ = []
        self.item_labels_ = []
        self.item_slots_ = []
        offset = 0
        for j, name in enumerate(names):
            if name in CATEGORICAL_LEVELS:
                levels = CATEGORICAL_LEVELS[name]
                self.cuts_.append(None)
                labels = [f"{name}={lev}" for lev in levels]
                slots = [(j, LevelSet(frozenset([lev]))) for lev in levels]
            else:
                cuts = quantile_cuts(X[:, j], self.bins)
                if len(cuts) + 1 < self.bins:
                    warnings.warn(f"{name}: only {len(cuts) + 1} of {self.bins} bins after merging "
                                  "duplicate quantiles", stacklevel=2)
                self.cuts_.append(cuts)
                edges = np.r_[-np.inf, cuts, np.inf]
                slots = [(j, Interval(edges[b], edges[b + 1], lo_closed=True, hi_closed=False))
                         for b in range(len(edges) - 1)]
                labels = [f"{name}={_interval_label(edges[b], edges[b + 1])}" for b in range(len(edges) - 1)]
            self.item_offset_.append(offset)
            self.item_labels_.extend(labels)
            self.item_slots_.extend(slots)
            offset += len(labels)
        self.n_items_ = offset
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.int64)
        for j, cuts in enumerate(self.cuts_):
            if cuts is None:
                out[:, j] = X[:, j].astype(np.int64)
            else:
                # half-open [a, b): a value equal to a cut goes to the upper bin
                out[:, j] = np.searchsorted(cuts, X[:, j], side="right")
        return out

    def transactions(self, X) -> list[frozenset]:
        codes = self.transform(X) + np.asarray(self.item_offset_)[None, :]
        return [frozenset(row.tolist()) for row in codes]


def _interval_label(a, b) -> str:
    lo = "-Inf" if math.isinf(a) else f"{a:.6g}"
    if math.isinf(b):
        return f"[{lo}, Inf]"
    return f"[{lo},{b:.6g})"


# -- mining ---------------------------------------------------------------------------

def _exact(threshold) -> Fraction:
    # thresholds are read as the decimals they were written as (0.85 means 85/100)
    return Fraction(repr(float(threshold)))


def min_support_count(min_support: float, n: int) -> int:
    """Smallest transaction count whose support reaches ``min_support``."""
    return max(1, math.ceil(_exact(min_support) * n))


def _bitsets(transactions, items=None) -> dict:
    sets: dict[int, int] = {}
    for r, t in enumerate(transactions):
        bit = 1 << r
        for i in t:
            if items is None or i in items:
                sets[i] = sets.get(i, 0) | bit
    return sets


def frequent_itemsets(transactions, min_support: float, max_len: int, consequents=None) -> dict:
    """Level-wise apriori.

    Returns ``{frozenset(items): count}`` for every itemset of size
    ``1..max_len`` with support >= ``min_support``.  When ``consequents``
    is given, only itemsets holding exactly one consequent item are
    generated (plus nothing else).
    """
    n = len(transactions)
    min_count = min_support_count(min_support, n)
    tid = _bitsets(transactions)
    cons = frozenset(consequents) if consequents is not None else None
    result: dict[frozenset, int] = {}

    if cons is None:
        level = {}
        for i in sorted(tid):
            c = tid[i].bit_count()
            if c >= min_count:
                level[(i,)] = tid[i]
    else:
        level = {}
        for c_item in sorted(cons & tid.keys()):
            cb = tid[c_item]
            if cb.bit_count() < min_count:
                continue
            level[(c_item,)] = cb
    for items, bits in level.items():
        result[frozenset(items)] = bits.bit_count()

    antecedent_items = sorted(i for i in tid if cons is None or i not in cons)
    size = 1
    while level and size < max_len:
        nxt = {}
        if cons is not None and size == 1:
            # pair each frequent consequent with every antecedent item
            for (c_item,), cb in level.items():
                for i in antecedent_items:
                    bits = cb & tid[i]
                    if bits.bit_count() >= min_count:
                        nxt[(c_item, i)] = bits
        else:
            keys = sorted(level)
            # join itemsets sharing all but their last item (consequent stays first)
            by_prefix: dict[tuple, list] = {}
            for k in keys:
                by_prefix.setdefault(k[:-1], []).append(k)
            for prefix, group in by_prefix.items():
                for a, b in combinations(group, 2):
                    cand = a + (b[-1],)
                    if not _all_subsets_frequent(cand, level, cons):
                        continue
                    bits = level[a] & tid[b[-1]]
                    if bits.bit_count() >= min_count:
                        nxt[cand] = bits
        for items, bits in nxt.items():
            result[frozenset(items)] = bits.bit_count()
        level = nxt
        size += 1
    return result


def _all_subsets_frequent(cand, level, cons) -> bool:
    start = 1 if cons is not None else 0  # the consequent at position 0 is never dropped
    for drop in range(start, len(cand)):
        sub = cand[:drop] + cand[drop + 1:]
        if sub not in level:
            return False
    return True


@dataclass
class AssocRule:
    antecedent: frozenset
    consequent: str
    count: int
    antecedent_count: int
    consequent_count: int
    n_transactions: int
    labels: tuple = ()
    rule_id: str = ""

    @property
    def support(self) -> float:
        return self.count / self.n_transactions

    @property
    def confidence(self) -> float:
        return self.count / self.antecedent_count

    @property
    def lift(self) -> float:
        return (self.count * self.n_transactions) / (self.antecedent_count * self.consequent_count)

    def exact(self) -> dict:
        """Support, confidence and lift as exact fractions."""
        return {
            "support": Fraction(self.count, self.n_transactions),
            "confidence": Fraction(self.count, self.antecedent_count),
            "lift": Fraction(self.count * self.n_transactions, self.antecedent_count * self.consequent_count),
            "consequent_support": Fraction(self.consequent_count, self.n_transactions),
        }

    @property
    def length(self) -> int:
        return len(self.antecedent)

    def text(self) -> str:
        return ",".join(self.labels)

    def to_dict(self) -> dict:
        return {
            "id": self.rule_id, "rule": self.text(), "items": sorted(self.antecedent),
            "consequent": self.consequent, "confidence": self.confidence, "count": self.count,
            "lift": self.lift, "support": self.support, "antecedent_count": self.antecedent_count,
            "consequent_count": self.consequent_count, "n_transactions": self.n_transactions,
        }


def apriori_mine(transactions, class_items: dict, min_support: float = 0.01,
                 min_confidence: float = 0.85, max_len: int = 5, item_labels=None) -> list[AssocRule]:
    """Mine rules ``antecedent -> fault`` with the fault item as consequent.

    ``class_items`` maps each consequent item id to its fault name.
    ``max_len`` counts the consequent.  Output is sorted by confidence,
    lift and count (all descending), then by antecedent items.
    """
    if not 0 < min_support <= 1 or not 0 < min_confidence <= 1:
        raise ValueError("thresholds must lie in (0, 1]")
    if max_len < 2:
        raise ValueError("max_len must be >= 2")
    n = len(transactions)
    min_conf = _exact(min_confidence)
    freq = frequent_itemsets(transactions, min_support, max_len, consequents=class_items)
    tid = _bitsets(transactions)
    rules = []
    for items, count in freq.items():
        if len(items) < 2:
            continue
        (c_item,) = [i for i in items if i in class_items]
        ante = items - {c_item}
        bits = -1
        for i in ante:
            bits &= tid[i]
        ante_count = (bits & ((1 << n) - 1)).bit_count()
        if Fraction(count, ante_count) < min_conf:
            continue
        labels = tuple(item_labels[i] for i in sorted(ante)) if item_labels is not None else ()
        rules.append(AssocRule(frozenset(ante), class_items[c_item], count, ante_count,
                               tid[c_item].bit_count(), n, labels))
    rules.sort(key=lambda r: (-Fraction(r.count, r.antecedent_count),
                              -Fraction(r.count * r.n_transactions, r.antecedent_count * r.consequent_count),
                              -r.count, sorted(r.antecedent), r.consequent))
    return rules


def filter_rules(rules, top_k: int = 10, max_antecedent_len: int | None = None) -> list[AssocRule]:
    """Keep at most ``top_k`` rules per fault, in input order."""
    taken: dict[str, int] = {}
    out = []
    for r in rules:
        if max_antecedent_len is not None and r.length > max_antecedent_len:
            continue
        if taken.get(r.consequent, 0) >= top_k:
            continue
        taken[r.consequent] = taken.get(r.consequent, 0) + 1
        out.append(r)
    by_class: dict[str, int] = {}
    named = []
    for r in out:
        by_class[r.consequent] = by_class.get(r.consequent, 0) + 1
        named.append(replace(r, rule_id=f"{r.consequent}-{by_class[r.consequent]}"))
    return named


@dataclass
class MinedRules:
    rules: list[AssocRule]
    discretizer: QuantileDiscretizer

    def condition(self, rule: AssocRule) -> Condition:
        cond = Condition(feature_names=self.discretizer.feature_names)
        for item in rule.antecedent:
            j, slot = self.discretizer.item_slots_[item]
            cond.add(j, slot)
        return cond


def mine_table(X, y, bins: int = 20, min_support: float = 0.01, min_confidence: float = 0.85,
               max_len: int = 5, top_k: int | None = 10, max_antecedent_len: int | None = None,
               feature_names=FEATURES) -> MinedRules:
    """Discretise ``X``, append the fault item to every row and mine class rules."""
    disc = QuantileDiscretizer(bins=bins, feature_names=feature_names).fit(X)
    y = np.asarray(y)
    names = np.asarray(FAULTS, dtype=object)[y] if y.dtype.kind in "iu" else y.astype(object)
    faults = sorted(set(names))
    class_items = {disc.n_items_ + k: f for k, f in enumerate(faults)}
    item_of = {f: i for i, f in class_items.items()}
    trans = [t | {item_of[lab]} for t, lab in zip(disc.transactions(X), names)]
    rules = apriori_mine(trans, class_items, min_support, min_confidence, max_len,
                         item_labels=disc.item_labels_)
    rules = filter_rules(rules, len(rules) if top_k is None else top_k, max_antecedent_len)
    return MinedRules(rules, disc)


def mined_to_dict(mined: MinedRules) -> dict:
    disc = mined.discretizer
    return {
        "format": ARM_FORMAT, "version": ARM_FORMAT_VERSION, "bins": disc.bins,
        "cuts": {name: (None if c is None else [float(v) for v in c])
                 for name, c in zip(disc.feature_names, disc.cuts_)},
        "rules": [{**r.to_dict(), "slots": mined.condition(r).to_list()} for r in mined.rules],
    }


def save_mined(mined: MinedRules, path):
    Path(path).write_text(json.dumps(mined_to_dict(mined), indent=1))
