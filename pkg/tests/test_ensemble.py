import json

import numpy as np
import pytest

from faultinsight.conditions import Condition, Interval, LevelSet
from faultinsight.data import FAULTS, FEATURES
from faultinsight.ensemble import (FALLBACK, MANUAL_FORMAT, MiningConfig, RuleEnsembleClassifier, RuleRow,
                                   RuleTable, compile_rule_table, load_manual_rules, rows_from_document)
from faultinsight.learners import RandomForest


def row(slots, fault="Bumps", conf=1.0, lift=1.0, prov="manual", rid="", names=FEATURES):
    return RuleRow(Condition(slots, feature_names=names), fault, conf, lift, prov, rid)


@pytest.fixture(scope="module")
def forest(synthetic):
    return RandomForest(n_trees=10, seed=0).fit(synthetic.X, synthetic.y)


def prebuilt(forest, rules):
    est = RuleEnsembleClassifier(rules=rules)
    est.fallback_, est.classes_ = forest, forest.classes_
    est.table_ = compile_rule_table(rules)
    return est


def test_worked_example_compiles_with_wildcards():
    names = ("V1", "V2", "V3")
    a1, b1, c1 = Interval(0, 1, True), Interval(1, 2, True), Interval(2, 3, True)
    spec = [({"V1": a1, "V3": Interval(20, 30, True)}, "R1"),
            ({"V2": Interval(10, 11, True), "V3": Interval(20, 30, True)}, "R2"),
            ({"V1": b1, "V2": Interval(10, 11, True), "V3": Interval(0, 10, True)}, "R3"),
            ({"V2": Interval(11, 12, True), "V3": Interval(20, 30, True)}, "R4"),
            ({"V1": c1, "V2": Interval(11, 12, True), "V3": Interval(10, 20, True)}, "R5")]
    rows = [row(s, fault=r, conf=0.9, rid=r, names=names) for s, r in spec]
    table = compile_rule_table(rows, names)
    frame = table.to_frame()
    assert len(frame) == 5
    # equal quality: fewer slots first, then input order
    assert list(frame.index) == ["R1", "R2", "R4", "R3", "R5"]
    assert frame.loc["R1", "V2"] == "-" and frame.loc["R2", "V1"] == "-" and frame.loc["R4", "V1"] == "-"
    assert frame.loc["R1", "V1"] == "[0,1)"


def test_priority_order():
    r_lo = row({"Pixels_Areas": Interval(hi=10)}, conf=0.8, rid="lo")
    r_hi = row({"Pixels_Areas": Interval(hi=10)}, conf=0.9, rid="hi")
    assert [r.rule_id for r in compile_rule_table([r_lo, r_hi]).rows] == ["hi", "lo"]
    lifted = row({"Pixels_Areas": Interval(hi=10)}, conf=0.8, lift=2.0, rid="lift")
    assert compile_rule_table([r_lo, lifted]).rows[0].rule_id == "lift"
    a = row({"Pixels_Areas": Interval(hi=10)}, conf=0.8, prov="assoc", rid="a")
    f = row({"Pixels_Areas": Interval(hi=10)}, conf=0.8, prov="forest", rid="f")
    m = row({"Pixels_Areas": Interval(hi=10)}, conf=0.8, prov="manual", rid="m")
    assert [r.rule_id for r in compile_rule_table([m, a, f]).rows] == ["f", "a", "m"]


def test_rejections():
    with pytest.raises(ValueError, match="wildcards"):
        compile_rule_table([row({})])
    with pytest.raises(ValueError, match="unknown feature"):
        RuleRow.from_dict({"fault": "Bumps", "slots": {"Nope": {"lo": 1}}})
    with pytest.raises(ValueError, match="unsatisfiable"):
        c = Condition({"Pixels_Areas": Interval(hi=1.0)})
        c.add("Pixels_Areas", Interval(lo=2.0))
    with pytest.raises(ValueError, match="unknown fault"):
        compile_rule_table([row({"Pixels_Areas": Interval(hi=10)}, fault="Rust")])


def test_empty_table_equals_fallback(forest, synthetic):
    est = prebuilt(forest, [])
    out = est.predict_explain(synthetic.X)
    assert np.array_equal(out.labels, forest.predict(synthetic.X))
    assert set(out.decided_by) == {FALLBACK} and out.fallback_count == len(synthetic)


def test_all_covering_rule(forest, synthetic):
    est = prebuilt(forest, [row({"Pixels_Areas": Interval()}, fault="Stains", rid="all")])
    out = est.predict_explain(synthetic.X)
    assert set(out.labels) == {FAULTS.index("Stains")}
    assert out.fire_counts == {FALLBACK: 0, "all": len(synthetic)}


def test_higher_priority_rule_wins(forest, synthetic):
    x = synthetic.X[:1]
    v = x[0, FEATURES.index("Pixels_Areas")]
    lo = row({"Pixels_Areas": Interval(hi=v + 1)}, fault="Pastry", conf=0.9, rid="weak")
    hi = row({"Pixels_Areas": Interval(lo=v - 1)}, fault="Dirtiness", conf=0.95, rid="strong")
    out = prebuilt(forest, [lo, hi]).predict_explain(x)
    assert FAULTS[out.labels[0]] == "Dirtiness" and out.decided_by == ["strong"]


def test_coverage_partition_and_determinism(forest, synthetic):
    rules = [row({"Pixels_Areas": Interval(hi=100)}, fault="Pastry", rid="a"),
             row({"TypeOfSteel": LevelSet(frozenset({"A400"}))}, fault="Bumps", conf=0.9, rid="b")]
    est = prebuilt(forest, rules)
    a, b = est.predict_explain(synthetic.X), est.predict_explain(synthetic.X)
    assert sum(a.fire_counts.values()) == len(synthetic)
    assert a.fire_counts == b.fire_counts and np.array_equal(a.labels, b.labels)


def test_zero_error_rule_never_lowers_training_accuracy(forest, synthetic):
    X, y = synthetic.X, synthetic.y
    base = np.mean(prebuilt(forest, []).predict(X) == y)
    col = FEATURES.index("Pixels_Areas")
    for fault in FAULTS:
        vals = X[y == FAULTS.index(fault), col]
        hi = np.sort(X[:, col])[0]
        cond = {"Pixels_Areas": Interval(hi=hi, hi_closed=True)}
        covered = X[:, col] <= hi
        if np.all(y[covered] == FAULTS.index(fault)) and vals.size:
            acc = np.mean(prebuilt(forest, [row(cond, fault=fault)]).predict(X) == y)
            assert acc >= base


def test_manual_rules_file(tmp_path, forest, synthetic):
    doc = {"format": MANUAL_FORMAT, "version": 1, "rows": [
        {"fault": "Bumps", "confidence": 0.9, "lift": 1.2,
         "slots": {"Steel_Plate_Thickness": {"lo": None, "hi": 60}, "TypeOfSteel": ["A300"], "Pixels_Areas": "-"}}]}
    path = tmp_path / "manual.json"
    path.write_text(json.dumps(doc))
    rows = load_manual_rules(path)
    assert rows[0].rule_id == "M-1" and rows[0].length == 2 and rows[0].provenance == "manual"
    s = rows[0].condition.slots[FEATURES.index("Steel_Plate_Thickness")]
    assert s.mask([59.9, 60.0]).tolist() == [True, False]


def test_fit_mines_rules_and_round_trips(tmp_path, synthetic):
    sub = synthetic.subset(np.arange(900))
    est = RuleEnsembleClassifier(n_trees=10, seed=0, mining=MiningConfig(forest_k=7, forest_max_depth=3))
    est.fit(sub.X, sub.y)
    assert len(est.table_) > 0
    for r in est.table_.rows:
        assert r.confidence == 1.0
    path = tmp_path / "ens.json"
    est.save(path)
    back = RuleEnsembleClassifier.load(path)
    assert np.array_equal(back.predict(synthetic.X), est.predict(synthetic.X))
    again = rows_from_document(json.loads(path.read_text()))
    assert [r.condition for r in again] == [r.condition for r in est.table_.rows]


def test_table_dict_round_trip():
    t = compile_rule_table([row({"Pixels_Areas": Interval(2, 5, True, False)}, rid="x")])
    back = RuleTable.from_dict(json.loads(json.dumps(t.to_dict())))
    assert back.rows[0].condition == t.rows[0].condition
