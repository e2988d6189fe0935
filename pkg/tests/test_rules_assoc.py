import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faultinsight.data import FAULTS
from faultinsight.rules_assoc import (AssocRule, QuantileDiscretizer, apriori_mine, filter_rules,
                                      frequent_itemsets, mine_table, mined_to_dict, quantile_cuts)


def test_quantile_cuts_hand_oracle():
    assert list(quantile_cuts(np.arange(1, 101), 4)) == [25.5, 50.5, 75.5]


def test_constant_column_is_one_interval():
    X = np.column_stack([np.full(50, 3.0), np.arange(50.0)])
    with pytest.warns(UserWarning, match="only 1 of 5 bins"):
        disc = QuantileDiscretizer(bins=5, feature_names=("a", "b")).fit(X)
    assert len(disc.cuts_[0]) == 0
    assert set(disc.transform(X)[:, 0]) == {0}


def test_half_open_bins():
    disc = QuantileDiscretizer(bins=4, feature_names=("a",)).fit(np.arange(1, 101)[:, None])
    # a value equal to a cut belongs to the upper interval [cut, next)
    assert list(disc.transform(np.array([[25.4], [25.5], [25.6]]))[:, 0]) == [0, 1, 1]
    assert disc.item_labels_[1] == "a=[25.5,50.5)"


def test_every_row_maps_to_one_item_per_feature(synthetic):
    disc = QuantileDiscretizer(bins=20).fit(synthetic.X)
    trans = disc.transactions(synthetic.X)
    assert all(len(t) == 26 for t in trans)
    for t in trans[:50]:
        feats = [disc.item_slots_[i][0] for i in t]
        assert sorted(feats) == list(range(26))


def test_bins_must_be_at_least_two():
    with pytest.raises(ValueError):
        quantile_cuts([1, 2, 3], 1)


def brute_force_itemsets(transactions, min_support, max_len, consequents=None):
    n = len(transactions)
    items = sorted(set().union(*transactions)) if transactions else []
    out = {}
    for size in range(1, max_len + 1):
        for combo in itertools.combinations(items, size):
            s = frozenset(combo)
            if consequents is not None and len(s & consequents) != 1:
                continue
            count = sum(1 for t in transactions if s <= t)
            if count > 0 and count >= math.ceil(Fraction(repr(min_support)) * n):
                out[s] = count
    return out


transactions_st = st.lists(st.frozensets(st.integers(0, 11), min_size=1, max_size=7), min_size=1, max_size=200)


@settings(max_examples=60, deadline=None)
@given(transactions_st, st.sampled_from([0.01, 0.05, 0.1, 0.3]), st.integers(1, 4))
def test_apriori_equals_brute_force(trans, min_support, max_len):
    assert frequent_itemsets(trans, min_support, max_len) == brute_force_itemsets(trans, min_support, max_len)


@settings(max_examples=60, deadline=None)
@given(transactions_st, st.sampled_from([0.01, 0.05, 0.2]), st.integers(2, 4))
def test_class_restricted_apriori_equals_brute_force(trans, min_support, max_len):
    cons = frozenset({9, 10, 11})
    got = {k: v for k, v in frequent_itemsets(trans, min_support, max_len, consequents=cons).items()}
    assert got == brute_force_itemsets(trans, min_support, max_len, cons)


@settings(max_examples=40, deadline=None)
@given(transactions_st, st.sampled_from([0.02, 0.1]), st.sampled_from([0.5, 0.8, 1.0]))
def test_rules_equal_brute_force_and_meet_thresholds(trans, min_support, min_conf):
    classes = {10: "A", 11: "B"}
    rules = apriori_mine(trans, classes, min_support, min_conf, max_len=3)
    n = len(trans)
    want = set()
    for s, count in brute_force_itemsets(trans, min_support, 3, frozenset(classes)).items():
        if len(s) < 2:
            continue
        (c,) = s & set(classes)
        ante = s - {c}
        ante_count = sum(1 for t in trans if ante <= t)
        if Fraction(count, ante_count) >= Fraction(repr(min_conf)):
            want.add((ante, classes[c], count))
    assert {(r.antecedent, r.consequent, r.count) for r in rules} == want
    for r in rules:
        ex = r.exact()
        assert 0 < ex["support"] <= ex["confidence"] <= 1
        assert ex["support"] >= Fraction(repr(min_support))
        assert ex["confidence"] >= Fraction(repr(min_conf))
        assert ex["lift"] * ex["consequent_support"] == ex["confidence"]
    keys = [(-r.exact()["confidence"], -r.exact()["lift"], -r.count) for r in rules]
    assert keys == sorted(keys)


def test_two_identical_transactions():
    rules = apriori_mine([frozenset({0, 1}), frozenset({0, 1})], {1: "c"}, 0.5, 0.5, 2)
    assert len(rules) == 1
    r = rules[0]
    assert r.antecedent == {0} and r.support == 1.0 and r.confidence == 1.0


def test_threshold_validation():
    with pytest.raises(ValueError):
        apriori_mine([frozenset({0})], {0: "c"}, 0.0, 0.5, 2)
    with pytest.raises(ValueError):
        apriori_mine([frozenset({0})], {0: "c"}, 0.5, 0.5, 1)


def test_full_confidence_rules_have_lift_seven_on_balanced_set(synthetic_smote):
    mined = mine_table(synthetic_smote.X, synthetic_smote.y, top_k=None)
    full = [r for r in mined.rules if r.count == r.antecedent_count]
    assert full
    assert all(r.exact()["lift"] == 7 and r.lift == 7.0 for r in full)
    assert all(r.lift <= 7.0 + 1e-9 for r in mined.rules)


def _rule(cons, conf_num, count=10):
    return AssocRule(frozenset({count}), cons, conf_num, 10, 10, 70)


def test_filter_per_class_cap():
    rules = [_rule("Bumps", 10 - i, count=i) for i in range(6)]
    assert len(filter_rules(rules, 3)) == 3
    assert filter_rules(rules, 0) == []
    ids = [r.rule_id for r in filter_rules(rules, 3)]
    assert ids == ["Bumps-1", "Bumps-2", "Bumps-3"]


def test_top_k_caps_total(synthetic_smote):
    mined = mine_table(synthetic_smote.X, synthetic_smote.y, top_k=10)
    assert len(mined.rules) <= 70
    per = {}
    for r in mined.rules:
        per[r.consequent] = per.get(r.consequent, 0) + 1
    assert max(per.values()) <= 10


def test_conditions_cover_the_counted_rows(synthetic_smote):
    X, y = synthetic_smote.X, synthetic_smote.y
    mined = mine_table(X, y, top_k=3)
    labels = np.asarray(FAULTS, dtype=object)[y]
    for r in mined.rules:
        m = mined.condition(r).mask(X)
        assert m.sum() == r.antecedent_count
        assert np.sum(m & (labels == r.consequent)) == r.count


def test_json_has_table_columns_and_cuts(synthetic_smote):
    doc = json.loads(json.dumps(mined_to_dict(mine_table(synthetic_smote.X, synthetic_smote.y, top_k=2))))
    assert {"rule", "confidence", "count", "lift", "support", "slots"} <= set(doc["rules"][0])
    assert doc["cuts"]["TypeOfSteel"] is None and len(doc["cuts"]["Pixels_Areas"]) > 0
