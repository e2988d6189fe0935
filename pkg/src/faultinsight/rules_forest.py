"""IF-THEN rules read off the trees of a fitted forest.

Pipeline: :func:`harvest_paths` turns every shallow root-to-node path into a
candidate rule, :func:`prune_rule` removes conditions that barely matter,
and :func:`score_and_select` keeps a class-balanced top-K by
``(1 - err) * freq``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .conditions import Atom, Condition, UnsatisfiableCondition
from .data import FAULTS, FEATURES
from .explain import class_names

RULES_FORMAT = "faultinsight.rules"
RULES_FORMAT_VERSION = 1


@dataclass
class ForestRule:
    atoms: tuple[Atom, ...]
    prediction: str
    freq: float = float("nan")
    err: float = float("nan")
    imp: float = float("nan")
    n_covered: int = 0
    tree: int = -1
    rule_id: str = ""
    prune_steps: list = field(default_factory=list, repr=False)
    feature_names: tuple = FEATURES

    @property
    def condition(self) -> Condition:
        return Condition.from_atoms(self.atoms, self.feature_names)

    @property
    def length(self) -> int:
        return len(self.condition)

    def mask(self, X) -> np.ndarray:
        return self.condition.mask(X)

    def humanize(self) -> str:
        return humanize(self.condition, self.prediction, self.err, self.freq)

    def to_dict(self) -> dict:
        return {
            "id": self.rule_id,
            "condition": self.condition.text(),
            "slots": self.condition.to_list(),
            "atoms": [{"feature": self.feature_names[a.feature], "op": a.op,
                       "value": sorted(a.value) if a.op == "in" else a.value} for a in self.atoms],
            "pred": self.prediction,
            "imp": self.imp,
            "err": self.err,
            "freq": self.freq,
            "n_covered": self.n_covered,
            "tree": self.tree,
        }

    @classmethod
    def from_dict(cls, d, feature_names=FEATURES) -> ForestRule:
        atoms = tuple(
            Atom(list(feature_names).index(a["feature"]), a["op"],
                 frozenset(a["value"]) if a["op"] == "in" else a["value"])
            for a in d["atoms"]
        )
        return cls(atoms, d["pred"], d["freq"], d["err"], d["imp"], d["n_covered"],
                   d.get("tree", -1), d.get("id", ""), feature_names=tuple(feature_names))


def humanize(condition: Condition, prediction: str, err=None, freq=None) -> str:
    parts = []
    for f in sorted(condition.slots):
        name = condition.feature_names[f].replace("_", " ")
        slot = condition.slots[f]
        if hasattr(slot, "levels"):
            parts.append(f"the steel type is {' or '.join(sorted(slot.levels))}")
        elif math.isinf(slot.lo):
            parts.append(f"{name} is at most {slot.hi:.6g}")
        elif math.isinf(slot.hi):
            parts.append(f"{name} is above {slot.lo:.6g}")
        else:
            parts.append(f"{name} is between {slot.lo:.6g} and {slot.hi:.6g}")
    text = f"If {' and '.join(parts)}, the fault is {prediction.replace('_', ' ')}"
    if err is not None and freq is not None and not math.isnan(err):
        text += f" (right {100 * (1 - err):.0f}% of the time, covering {100 * freq:.0f}% of plates)"
    return text + "."


def harvest_paths(model, max_depth: int = 6, feature_names=FEATURES) -> list[ForestRule]:
    """One rule per root-to-node path of length 1..``max_depth`` over all trees.

    The rule predicts the majority training class at the node.  Paths whose
    normalised condition was already seen are dropped (first one kept).
    """
    names = class_names(model)
    seen = set()
    out = []
    for t, tree in enumerate(model.trees_):
        stack = [(0, ())]
        while stack:
            node, atoms = stack.pop()
            if atoms:
                cond = Condition.from_atoms(atoms, feature_names)
                key = cond.key()
                if key not in seen:
                    seen.add(key)
                    pred = names[int(np.argmax(tree.counts[node]))]
                    out.append(ForestRule(atoms, pred, tree=t, feature_names=tuple(feature_names)))
            if tree.is_leaf(node) or len(atoms) >= max_depth:
                continue
            f, thr = int(tree.feature[node]), float(tree.threshold[node])
            # right pushed first: children come out left-then-right
            stack.append((int(tree.right[node]), atoms + (Atom(f, ">", thr),)))
            stack.append((int(tree.left[node]), atoms + (Atom(f, "<=", thr),)))
    return out


def rule_metrics(mask, y_labels, prediction):
    """``(freq, err, n_covered)`` of a rule covering ``mask``."""
    n_cov = int(mask.sum())
    if n_cov == 0:
        return 0.0, float("nan"), 0
    wrong = int(np.sum(y_labels[mask] != prediction))
    return n_cov / mask.size, wrong / n_cov, n_cov


def _labels(y):
    y = np.asarray(y)
    if y.dtype.kind in "iu":
        return np.asarray(FAULTS, dtype=object)[y]
    return y.astype(object)


def prune_rule(rule: ForestRule, X, y, delta: float = 0.01) -> ForestRule:
    """Drop conditions, last-added first, whenever error grows by at most ``delta``.

    At least one condition is always kept.  Each accepted step is logged in
    ``prune_steps`` as ``(dropped atom, err before, err after)``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = _labels(y)
    masks = [a.mask(X, rule.feature_names) for a in rule.atoms]
    keep = list(range(len(rule.atoms)))

    def covered(idx):
        m = np.ones(X.shape[0], dtype=bool)
        for i in idx:
            m &= masks[i]
        return m

    mask = covered(keep)
    if not mask.any():
        raise ValueError(f"rule {rule.condition.text()} covers no rows")
    _, err, _ = rule_metrics(mask, labels, rule.prediction)
    steps = []
    for i in reversed(range(len(rule.atoms))):
        if len(keep) == 1:
            break
        trial = [k for k in keep if k != i]
        _, trial_err, _ = rule_metrics(covered(trial), labels, rule.prediction)
        if trial_err - err <= delta:
            steps.append((rule.atoms[i], err, trial_err))
            keep, err = trial, trial_err
    atoms = tuple(rule.atoms[k] for k in keep)
    freq, err, n_cov = rule_metrics(covered(keep), labels, rule.prediction)
    return replace(rule, atoms=atoms, freq=freq, err=err, n_covered=n_cov, prune_steps=steps)


def prune_rules(rules, X, y, delta: float = 0.01) -> list[ForestRule]:
    """Prune every rule, skipping rules that cover nothing in ``X``."""
    out = []
    for r in rules:
        try:
            out.append(prune_rule(r, X, y, delta))
        except (ValueError, UnsatisfiableCondition):
            continue
    return out


def score_and_select(rules, X, y, k: int = 20, n_classes: int = len(FAULTS)) -> list[ForestRule]:
    """Class-balanced top-``k`` by ``(1 - err) * freq``, rescaled so the best is 1.

    Metrics are recomputed on ``(X, y)``.  Rules with identical normalised
    condition and prediction are merged.  At most ``ceil(k / n_classes)``
    rules per predicted class are kept.
    """
    if not rules:
        raise ValueError("no rules to score")
    X = np.asarray(X, dtype=np.float64)
    labels = _labels(y)
    scored, seen = [], set()
    for r in rules:
        key = (r.condition.key(), r.prediction)
        if key in seen:
            continue
        seen.add(key)
        freq, err, n_cov = rule_metrics(r.mask(X), labels, r.prediction)
        if n_cov == 0:
            continue
        scored.append(replace(r, freq=freq, err=err, n_covered=n_cov, imp=(1.0 - err) * freq))
    order = sorted(range(len(scored)), key=lambda i: -scored[i].imp)
    cap = math.ceil(k / n_classes)
    per_class, chosen = {}, []
    for i in order:
        if len(chosen) >= k:
            break
        r = scored[i]
        if per_class.get(r.prediction, 0) >= cap:
            continue
        per_class[r.prediction] = per_class.get(r.prediction, 0) + 1
        chosen.append(r)
    top = max((r.imp for r in chosen), default=0.0)
    out = []
    for n, r in enumerate(chosen, start=1):
        out.append(replace(r, imp=r.imp / top if top > 0 else 0.0, rule_id=f"RF-{n}"))
    return out


def extract_rules(model, X, y, k: int = 20, max_depth: int = 6, delta: float = 0.01,
                  feature_names=FEATURES) -> list[ForestRule]:
    """harvest -> prune -> score/select in one call."""
    raw = harvest_paths(model, max_depth=max_depth, feature_names=feature_names)
    return score_and_select(prune_rules(raw, X, y, delta), X, y, k)


def rules_to_dict(rules, source="rf") -> dict:
    return {"format": RULES_FORMAT, "version": RULES_FORMAT_VERSION, "source": source,
            "rules": [r.to_dict() for r in rules]}


def save_rules(rules, path, humanize_text=False):
    doc = rules_to_dict(rules)
    if humanize_text:
        for d, r in zip(doc["rules"], rules):
            d["text"] = r.humanize()
    Path(path).write_text(json.dumps(doc, indent=1))


def load_rules(path) -> list[ForestRule]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != RULES_FORMAT or doc.get("source") != "rf":
        raise ValueError("not a forest rules document")
    return [ForestRule.from_dict(d) for d in doc["rules"]]
