"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria that need the reference plate data fail with a pointer to
FAULTINSIGHT_DATA when the file is missing.  Criteria that only exercise
invariants fall back to the synthetic stand-in, which has the reference
class counts.  Run with ``pytest tests/test_acceptance.py -s`` to see the
lines inline; they are also collected in the terminal summary.
"""

import functools
import inspect
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from conftest import ACCEPTANCE, reference_data_path
from faultinsight.balancing import BalanceConfig, balance
from faultinsight.data import FAULTS, FEATURES, make_synthetic, read_table
from faultinsight.ensemble import evaluate_ensemble
from faultinsight.evaluation import benchmark, cross_validate, make_folds
from faultinsight.explain import breakdown, ceteris_paribus, correlation_filter, partial_dependence, permutation_importance
from faultinsight.learners import RandomForest
from faultinsight.medoids import compute_medoids, medoid_for
from faultinsight.pipeline import PipelineConfig, run_pipeline
from faultinsight.rules_assoc import frequent_itemsets, mine_table, min_support_count
from faultinsight.rules_forest import extract_rules, rule_metrics

pytestmark = pytest.mark.slow

SEEDS = (0, 1, 2)
STAND_IN = "synthetic stand-in with reference class counts"


def _load_reference():
    path = reference_data_path()
    return read_table(path) if path.is_file() else None


REFERENCE = _load_reference()


def _missing():
    return f"reference dataset not found at {reference_data_path()}; set FAULTINSIGHT_DATA"


def _source():
    return "reference data" if REFERENCE is not None else STAND_IN


def criterion(number, title, needs_data=False):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(request, *args, **kwargs):
            def record(ok, detail):
                line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {title} ({detail})"
                print(line)
                request.config.stash[ACCEPTANCE].append(line)
                return ok

            if needs_data and REFERENCE is None:
                record(False, _missing())
                pytest.fail(_missing())
            try:
                ok, detail = fn(*args, **kwargs)
            except Exception as exc:
                record(False, f"error: {exc!r}")
                raise
            record(ok, detail)
            assert ok, detail

        sig = inspect.signature(fn)
        wrapper.__signature__ = sig.replace(parameters=[
            inspect.Parameter("request", inspect.Parameter.POSITIONAL_OR_KEYWORD), *sig.parameters.values()])
        del wrapper.__wrapped__
        return wrapper

    return deco


def _original():
    return REFERENCE if REFERENCE is not None else make_synthetic(seed=0)


@pytest.fixture(scope="module")
def smote():
    return balance(_original(), BalanceConfig("smote", seed=0))


@criterion(1, "balancing counts exact")
def test_criterion_01_balancing_counts():
    table = _original()
    got = {}
    for strategy in ("undersample", "oversample", "smote"):
        out = balance(table, BalanceConfig(strategy, seed=0))
        got[strategy] = (len(out), sorted(set(np.bincount(out.y).tolist())))
    want = {"undersample": (385, [55]), "oversample": (4711, [673]), "smote": (4711, [673])}
    base = np.bincount(table.y).tolist()
    ok = got == want and len(table) == 1941
    return ok, f"{_source()}; class counts {base}; got {got}"


@criterion(2, "tuned forest CV accuracy: SMOTE >= 0.90, original in [0.75, 0.81], mean of 3 seeds",
           needs_data=True)
def test_criterion_02_forest_accuracy():
    acc_s, acc_o = [], []
    for seed in SEEDS:
        est = RandomForest(186, 5, 1, seed=seed)
        sm = balance(REFERENCE, BalanceConfig("smote", seed=seed))
        acc_s.append(cross_validate(sm, est, make_folds(sm, 10, seed)).accuracy)
        acc_o.append(cross_validate(REFERENCE, est, make_folds(REFERENCE, 10, seed)).accuracy)
    s, o = float(np.mean(acc_s)), float(np.mean(acc_o))
    return s >= 0.90 and 0.75 <= o <= 0.81, f"SMOTE {s:.4f}, original {o:.4f}"


@criterion(3, "forest OOB error on SMOTE <= 0.10", needs_data=True)
def test_criterion_03_oob(smote):
    err = RandomForest(186, 5, 1, seed=0).fit(smote.X, smote.y).oob_error_
    return err <= 0.10, f"OOB error {err:.4f}"


@criterion(4, "forest benchmark ordering oversample >= SMOTE >= original >= undersample", needs_data=True)
def test_criterion_04_benchmark_ordering():
    sets = {name: balance(REFERENCE, BalanceConfig(strategy, seed=0)) for name, strategy in
            (("oversample", "oversample"), ("smote", "smote"), ("original", "none"),
             ("undersample", "undersample"))}
    grid = benchmark(sets, {"random_forest": RandomForest(186, 5, 1, seed=0)}, seed=0, n_folds=10)
    row = grid.loc["random_forest"]
    vals = [row[k] for k in ("oversample", "smote", "original", "undersample")]
    ok = all(a - b >= 0 for a, b in zip(vals, vals[1:]))
    return ok, ", ".join(f"{k} {v:.4f}" for k, v in row.items())


@criterion(5, "medoid spot checks exact", needs_data=True)
def test_criterion_05_medoids():
    meds = compute_medoids(REFERENCE)
    checks = [("Pastry", "Length_of_Conveyer", 1648), ("Pastry", "Steel_Plate_Thickness", 85),
              ("Pastry", "TypeOfSteel", "A300"), ("K_Scratch", "TypeOfSteel", "A400"),
              ("K_Scratch", "Pixels_Areas", 6281), ("Bumps", "X_Minimum", 856.5)]
    bad = [(f, c, medoid_for(meds, f).values[c], want) for f, c, want in checks
           if medoid_for(meds, f).values[c] != want]
    return not bad, "all cells match" if not bad else f"mismatches {bad}"


@criterion(6, "correlation filter flags exactly the five named features at 0.90", needs_data=True)
def test_criterion_06_correlation():
    want = {"Sum_of_Luminosity", "Pixels_Areas", "X_Perimeter", "X_Minimum", "Y_Minimum"}
    rep = correlation_filter(REFERENCE.X, FEATURES, 0.90)
    got = set(rep.flagged)
    return got == want, f"flagged {sorted(got)}; groups {rep.groups}"


@criterion(7, "explanation invariants exact to 1e-9")
def test_criterion_07_explanations(smote):
    model = RandomForest(60, 5, 1, seed=0).fit(smote.X, smote.y)
    meds = compute_medoids(_original())
    worst = 0.0
    for fault in FAULTS:
        m = medoid_for(meds, fault)
        anchor = m.as_row()[None, :]
        p_anchor = model.predict_proba(anchor)[0]
        for feature in ("Length_of_Conveyer", "Steel_Plate_Thickness", "Pixels_Areas"):
            cp = ceteris_paribus(model, m, feature, smote.X, 51)
            j = int(np.flatnonzero(cp.grid == anchor[0, FEATURES.index(feature)])[0])
            worst = max(worst, float(np.max(np.abs(cp.values[j] - p_anchor))))
            worst = max(worst, float(np.max(np.abs(cp.values.sum(axis=1) - 1.0))))
        rng = np.random.default_rng(FAULTS.index(fault))
        for _ in range(100):
            order = [FEATURES[i] for i in rng.permutation(len(FEATURES))]
            bd = breakdown(model, m, smote.X, ordering=order)
            worst = max(worst, abs(bd.intercept + float(np.sum(bd.contributions)) - bd.prediction))
    # a forest trained with Pixels_Areas held constant never splits on it
    X0 = smote.X.copy()
    j = FEATURES.index("Pixels_Areas")
    X0[:, j] = 0.0
    blind = RandomForest(30, 5, 1, seed=1).fit(X0, smote.y)
    pd_ = partial_dependence(blind, smote.X, "Pixels_Areas", 51, 300, seed=0)
    flat = float(np.max(np.abs(pd_.values - pd_.values[0])))
    worst = max(worst, flat, float(np.max(np.abs(model.predict_proba(smote.X).sum(axis=1) - 1.0))))
    return worst <= 1e-9, f"{_source()}; max deviation {worst:.3e}"


@criterion(8, "Length_of_Conveyer and Steel_Plate_Thickness in top 5 importance ranks, 3 seeds",
           needs_data=True)
def test_criterion_08_importance():
    ranks = []
    for seed in SEEDS:
        sm = balance(REFERENCE, BalanceConfig("smote", seed=seed))
        model = RandomForest(186, 5, 1, seed=seed).fit(sm.X, sm.y)
        rep = permutation_importance(model, sm.X, sm.y, 10, seed)
        r = dict(zip(rep.feature_names, rep.ranks.tolist()))
        ranks.append((r["Length_of_Conveyer"], r["Steel_Plate_Thickness"]))
    ok = all(a <= 5 and b <= 5 for a, b in ranks)
    return ok, f"(Length_of_Conveyer, Steel_Plate_Thickness) ranks per seed {ranks}"


def _brute_force(transactions, min_count, max_len):
    items = sorted(set().union(*transactions))
    out = {}
    for size in range(1, max_len + 1):
        for combo in combinations(items, size):
            s = frozenset(combo)
            c = sum(1 for t in transactions if s <= t)
            if c >= min_count:
                out[s] = c
    return out


@criterion(9, "association rules: lift 7 at confidence 1, thresholds hold, apriori equals brute force")
def test_criterion_09_association(smote):
    rules = mine_table(smote.X, smote.y, 20, 0.01, 0.85, 5, top_k=None).rules
    n = len(smote)
    sup_min = min_support_count(0.01, n)
    conf1 = [r for r in rules if r.count == r.antecedent_count]
    bad_lift = [r for r in conf1 if r.exact()["lift"] != Fraction(7)]
    bad_thr = [r for r in rules if r.count < sup_min or Fraction(r.count, r.antecedent_count) < Fraction("0.85")
               or r.length > 5]

    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(40):
        n_items = int(rng.integers(3, 13))
        n_trans = int(rng.integers(1, 201))
        density = rng.uniform(0.1, 0.7)
        tr = [frozenset(np.flatnonzero(rng.random(n_items) < density).tolist()) for _ in range(n_trans)]
        ms = float(rng.choice([0.01, 0.05, 0.1, 0.2, 0.3]))
        ml = int(rng.integers(1, 6))
        got = frequent_itemsets(tr, ms, ml)
        if got != _brute_force(tr, min_support_count(ms, n_trans), ml):
            mismatches += 1
    ok = rules and conf1 and not bad_lift and not bad_thr and mismatches == 0
    return bool(ok), (f"{_source()}; {len(rules)} rules, {len(conf1)} at confidence 1, {len(bad_lift)} with lift != 7, "
                      f"{len(bad_thr)} threshold violations, {mismatches}/40 oracle mismatches")


@criterion(10, "forest-rule metrics recompute exactly; top normalized imp is 1.0")
def test_criterion_10_forest_rules(smote):
    model = RandomForest(186, 5, 1, seed=0).fit(smote.X, smote.y)
    rules = extract_rules(model, smote.X, smote.y, k=20, max_depth=6)
    labels = np.asarray(FAULTS, dtype=object)[smote.y]
    bad = 0
    for r in rules:
        freq, err, n_cov = rule_metrics(r.mask(smote.X), labels, r.prediction)
        if (freq, err, n_cov) != (r.freq, r.err, r.n_covered):
            bad += 1
    top = rules[0].imp
    ok = bad == 0 and top == 1.0 and max(r.imp for r in rules) == 1.0
    return ok, f"{_source()}; {len(rules)} rules, {bad} metric mismatches, top imp {top}"


@criterion(11, "ensemble: SMOTE >= 0.92 and >= fallback - 0.01; original with mine-on-full >= 0.90",
           needs_data=True)
def test_criterion_11_ensemble(smote):
    rep = evaluate_ensemble(smote, plan=make_folds(smote, 10, 0), seed=0)
    full = evaluate_ensemble(REFERENCE, plan=make_folds(REFERENCE, 10, 0), mine_on_full=True, seed=0)
    ok = rep.accuracy >= 0.92 and rep.accuracy >= rep.fallback_accuracy - 0.01 and full.accuracy >= 0.90
    return ok, (f"SMOTE ensemble {rep.accuracy:.4f} vs fallback {rep.fallback_accuracy:.4f}; "
                f"original mine-on-full {full.accuracy:.4f}")


@criterion(12, "full pipeline manifest hash identical across two runs")
def test_criterion_12_determinism(tmp_path):
    data = str(reference_data_path()) if REFERENCE is not None else "synthetic"
    hashes = []
    for run in ("a", "b"):
        cfg = PipelineConfig(seed=11, data=data, out_dir=str(tmp_path / run))
        hashes.append(run_pipeline(cfg).manifest_hash)
    return hashes[0] == hashes[1], f"{_source()}; {hashes[0][:16]} vs {hashes[1][:16]}"


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-s", "-q"]))
