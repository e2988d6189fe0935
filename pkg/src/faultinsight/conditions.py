"""Interval / level-set conditions shared by the rule miners and the rule table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import FEATURES, STEEL_COLUMN, STEEL_LEVELS

CATEGORICAL_LEVELS = {STEEL_COLUMN: STEEL_LEVELS}


@dataclass(frozen=True)
class Interval:
    """Numeric slot ``lo <(=) x <(=) hi``; infinite ends are always open."""

    lo: float = -math.inf
    hi: float = math.inf
    lo_closed: bool = False
    hi_closed: bool = False

    def __post_init__(self):
        if math.isinf(self.lo):
            object.__setattr__(self, "lo_closed", False)
        if math.isinf(self.hi):
            object.__setattr__(self, "hi_closed", False)

    @property
    def is_empty(self) -> bool:
        if self.lo < self.hi:
            return False
        return not (self.lo == self.hi and self.lo_closed and self.hi_closed)

    @property
    def is_full(self) -> bool:
        return math.isinf(self.lo) and math.isinf(self.hi)

    def intersect(self, other: Interval) -> Interval:
        if self.lo > other.lo or (self.lo == other.lo and not self.lo_closed):
            lo, lo_c = self.lo, self.lo_closed
        else:
            lo, lo_c = other.lo, other.lo_closed
        if self.hi < other.hi or (self.hi == other.hi and not self.hi_closed):
            hi, hi_c = self.hi, self.hi_closed
        else:
            hi, hi_c = other.hi, other.hi_closed
        return Interval(lo, hi, lo_c, hi_c)

    def mask(self, x) -> np.ndarray:
        x = np.asarray(x)
        lower = x >= self.lo if self.lo_closed else x > self.lo
        upper = x <= self.hi if self.hi_closed else x < self.hi
        return lower & upper

    def text(self, name) -> str:
        if self.is_full:
            return f"{name} any"
        if math.isinf(self.lo):
            return f"{name}{'<=' if self.hi_closed else '<'}{_num(self.hi)}"
        if math.isinf(self.hi):
            return f"{name}{'>=' if self.lo_closed else '>'}{_num(self.lo)}"
        return (f"{name}={'[' if self.lo_closed else '('}{_num(self.lo)},"
                f"{_num(self.hi)}{']' if self.hi_closed else ')'}")

    def to_dict(self) -> dict:
        return {
            "lo": None if math.isinf(self.lo) else self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, d) -> Interval:
        lo = -math.inf if d.get("lo") is None else float(d["lo"])
        hi = math.inf if d.get("hi") is None else float(d["hi"])
        return cls(lo, hi, bool(d.get("lo_closed", True)), bool(d.get("hi_closed", False)))


@dataclass(frozen=True)
class LevelSet:
    levels: frozenset

    @property
    def is_empty(self) -> bool:
        return not self.levels

    def intersect(self, other: LevelSet) -> LevelSet:
        return LevelSet(self.levels & other.levels)

    def mask(self, codes, levels) -> np.ndarray:
        allowed = [i for i, lev in enumerate(levels) if lev in self.levels]
        return np.isin(np.asarray(codes).astype(int), allowed)

    def text(self, name) -> str:
        return f"{name} in {{{','.join(sorted(self.levels))}}}"

    def to_dict(self) -> dict:
        return {"levels": sorted(self.levels)}


def _num(v) -> str:
    return f"{v:.6g}"


class UnsatisfiableCondition(ValueError):
    pass


@dataclass(frozen=True)
class Atom:
    """Single comparison as it appears on a tree path: ``<=``, ``>`` or ``in``."""

    feature: int
    op: str
    value: object

    def slot(self, feature_names=FEATURES):
        name = feature_names[self.feature]
        if self.op == "in":
            return LevelSet(frozenset(self.value))
        if name in CATEGORICAL_LEVELS:
            # binary 0/1 code split at a threshold between the codes
            levels = CATEGORICAL_LEVELS[name]
            keep = [lev for i, lev in enumerate(levels)
                    if (i <= self.value if self.op == "<=" else i > self.value)]
            return LevelSet(frozenset(keep))
        if self.op == "<=":
            return Interval(hi=float(self.value), hi_closed=True)
        if self.op == ">":
            return Interval(lo=float(self.value), lo_closed=False)
        raise ValueError(f"unknown relation {self.op!r}")

    def mask(self, X, feature_names=FEATURES):
        name = feature_names[self.feature]
        slot = self.slot(feature_names)
        if isinstance(slot, LevelSet):
            return slot.mask(X[:, self.feature], CATEGORICAL_LEVELS[name])
        return slot.mask(X[:, self.feature])


class Condition:
    """Conjunction normalised to one slot per feature.

    Equality and hashing ignore the order in which slots were added.
    """

    def __init__(self, slots: dict | None = None, feature_names=FEATURES):
        self.feature_names = tuple(feature_names)
        self.slots: dict[int, Interval | LevelSet] = {}
        for f, s in (slots or {}).items():
            self.add(f, s)

    @classmethod
    def from_atoms(cls, atoms, feature_names=FEATURES) -> Condition:
        cond = cls(feature_names=feature_names)
        for a in atoms:
            cond.add(a.feature, a.slot(feature_names))
        return cond

    def add(self, feature, slot):
        if isinstance(feature, str):
            if feature not in self.feature_names:
                raise ValueError(f"unknown feature {feature!r}")
            feature = self.feature_names.index(feature)
        if not 0 <= feature < len(self.feature_names):
            raise ValueError(f"unknown feature index {feature}")
        name = self.feature_names[feature]
        if isinstance(slot, LevelSet) != (name in CATEGORICAL_LEVELS):
            raise ValueError(f"slot type does not match feature {name!r}")
        merged = slot if feature not in self.slots else self.slots[feature].intersect(slot)
        if merged.is_empty:
            raise UnsatisfiableCondition(f"condition on {name} is unsatisfiable")
        self.slots[feature] = merged

    def __len__(self):
        return len(self.slots)

    def key(self) -> tuple:
        return tuple(sorted(self.slots.items(), key=lambda kv: kv[0]))

    def __eq__(self, other):
        return isinstance(other, Condition) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def mask(self, X) -> np.ndarray:
        X = np.asarray(X)
        out = np.ones(X.shape[0], dtype=bool)
        for f, slot in self.slots.items():
            if isinstance(slot, LevelSet):
                out &= slot.mask(X[:, f], CATEGORICAL_LEVELS[self.feature_names[f]])
            else:
                out &= slot.mask(X[:, f])
        return out

    def text(self) -> str:
        return " & ".join(self.slots[f].text(self.feature_names[f]) for f in sorted(self.slots))

    def to_list(self) -> list[dict]:
        return [{"feature": self.feature_names[f], **self.slots[f].to_dict()} for f in sorted(self.slots)]

    @classmethod
    def from_list(cls, items, feature_names=FEATURES) -> Condition:
        cond = cls(feature_names=feature_names)
        for d in items:
            slot = LevelSet(frozenset(d["levels"])) if "levels" in d else Interval.from_dict(d)
            cond.add(d["feature"], slot)
        return cond

    def __repr__(self):
        return f"Condition({self.text()})"
