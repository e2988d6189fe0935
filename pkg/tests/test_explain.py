import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import StubModel
from faultinsight.data import FAULTS, FEATURES, STEEL_INDEX
from faultinsight.explain import (Breakdown, Profile, breakdown, ceteris_paribus, correlation_filter, log_loss,
                                  partial_dependence, permutation_importance)
from faultinsight.medoids import compute_medoids, medoid_for

WEIGHTS = np.linspace(-0.01, 0.01, 26)


def additive_model():
    """p(class 0) = 0.5 + sum_j w_j * tanh(x_j): additive, so breakdown has a closed form."""
    def fn(X):
        p0 = 0.5 + np.tanh(X) @ WEIGHTS
        return np.column_stack([p0, 1 - p0])
    return StubModel(fn, np.array([0, 1]))


def first_feature_model():
    def fn(X):
        p = 1 / (1 + np.exp(-X[:, 0]))
        return np.column_stack([p, 1 - p])
    return StubModel(fn, np.array([0, 1]))


def test_cp_at_anchor_value_equals_anchor_prediction(small_forest, synthetic):
    meds = compute_medoids(synthetic)
    for m in meds[:3]:
        for feature in ("Length_of_Conveyer", "Pixels_Areas", "TypeOfSteel"):
            prof = ceteris_paribus(small_forest, m, feature, synthetic.X, grid_size=21)
            j = FEATURES.index(feature)
            at = np.flatnonzero(prof.grid == m.as_row()[j])
            assert at.size == 1
            want = small_forest.predict_proba(m.as_row()[None, :])[0]
            assert np.max(np.abs(prof.values[at[0]] - want)) <= 1e-9


def test_cp_categorical_grid_lists_levels(small_forest, synthetic):
    prof = ceteris_paribus(small_forest, synthetic.X[0], "TypeOfSteel", synthetic.X)
    assert list(prof.grid) == [0.0, 1.0] and prof.categorical_levels == ["A300", "A400"]


def test_cp_of_stump_is_a_step():
    def fn(X):
        p = (X[:, 0] > 2.5).astype(float)
        return np.column_stack([1 - p, p])
    model = StubModel(fn, np.array([0, 1]))
    data = np.tile(np.arange(6.0)[:, None], (1, 26))
    prof = ceteris_paribus(model, data[0], 0, data, grid_size=6)
    assert list(prof.values[:, 1]) == [0, 0, 0, 1, 1, 1]


def test_pd_of_ignored_feature_is_constant(synthetic):
    model = first_feature_model()
    prof = partial_dependence(model, synthetic.X, "Steel_Plate_Thickness", grid_size=15)
    assert np.ptp(prof.values, axis=0).max() == 0.0


def test_pd_is_mean_of_cp_curves(small_forest, synthetic):
    data = synthetic.X[:30]
    pd_ = partial_dependence(small_forest, data, "Pixels_Areas", grid_size=9)
    curves = []
    for row in data:
        Xg = np.repeat(row[None, :], len(pd_.grid), axis=0)
        Xg[:, FEATURES.index("Pixels_Areas")] = pd_.grid
        curves.append(small_forest.predict_proba(Xg))
    assert np.max(np.abs(np.mean(curves, axis=0) - pd_.values)) <= 1e-12


def test_pd_background_prefixes_nest(synthetic):
    model = first_feature_model()
    small = partial_dependence(model, synthetic.X, 0, grid_size=3, n_background=50, seed=1)
    assert small.n_background == 50
    with pytest.raises(ValueError):
        partial_dependence(model, synthetic.X[:10], 0, n_background=11)


def test_breakdown_telescopes_for_random_orderings(small_forest, synthetic):
    m = medoid_for(compute_medoids(synthetic), "Pastry")
    rng = np.random.default_rng(0)
    data = synthetic.X[:300]
    target = small_forest.predict_proba(m.as_row()[None, :])[0, FAULTS.index("Pastry")]
    for _ in range(100):
        order = list(rng.permutation(26))
        bd = breakdown(small_forest, m, data, ordering=order)
        assert abs(bd.intercept + bd.contributions.sum() - bd.prediction) <= 1e-9
        assert abs(bd.prediction - target) <= 1e-12


def test_breakdown_recovers_additive_terms():
    rng = np.random.default_rng(1)
    data = rng.normal(size=(200, 26))
    anchor = rng.normal(size=26)
    model = additive_model()
    want = WEIGHTS * (np.tanh(anchor) - np.tanh(data).mean(axis=0))
    for seed in range(5):
        order = list(np.random.default_rng(seed).permutation(26))
        bd = breakdown(model, anchor, data, target=0, ordering=order)
        got = dict(zip(bd.features, bd.contributions))
        assert max(abs(got[FEATURES[j]] - want[j]) for j in range(26)) <= 1e-12


def test_breakdown_needs_target_for_plain_rows(small_forest, synthetic):
    with pytest.raises(ValueError, match="target"):
        breakdown(small_forest, synthetic.X[0], synthetic.X[:10])
    with pytest.raises(ValueError, match="permutation"):
        breakdown(small_forest, synthetic.X[0], synthetic.X[:10], target="Bumps", ordering=[0, 1])


def test_probabilities_sum_to_one_everywhere(small_forest, synthetic):
    prof = partial_dependence(small_forest, synthetic.X[:100], "Empty_Index", grid_size=11)
    assert np.max(np.abs(prof.values.sum(axis=1) - 1)) <= 1e-9


def test_permutation_importance_finds_the_only_used_feature(synthetic):
    y = (synthetic.X[:, 0] < np.median(synthetic.X[:, 0])).astype(int)
    rep = permutation_importance(first_feature_model(), synthetic.X, y, n_repeats=3, seed=0)
    assert rep.ranks[0] == 1
    assert np.all(rep.mean_loss[1:] == 0.0)
    # zero-importance ties keep schema order
    assert list(rep.ranks[1:]) == list(range(2, 27))


def test_permutation_importance_is_seeded(small_forest, synthetic):
    a = permutation_importance(small_forest, synthetic.X[:200], synthetic.y[:200], 2, seed=4)
    b = permutation_importance(small_forest, synthetic.X[:200], synthetic.y[:200], 2, seed=4)
    assert np.array_equal(a.mean_loss, b.mean_loss)
    assert sorted(a.ranks) == list(range(1, 27))


def test_log_loss_floor():
    assert log_loss(np.array([[0.0, 1.0]]), np.array([0])) == pytest.approx(-np.log(1e-15))


def test_correlation_filter_groups_and_flags():
    rng = np.random.default_rng(0)
    base = rng.normal(size=500)
    other = rng.normal(size=500)
    X = np.column_stack([base, 2 * base + 1e-3 * rng.normal(size=500), -base, other,
                         other + 0.1 * rng.normal(size=500), rng.normal(size=500), np.ones(500)])
    names = ["a", "b", "c", "d", "e", "f", "k"]
    rep = correlation_filter(X, names, threshold=0.9)
    assert sorted(map(sorted, rep.groups)) == [["a", "b", "c"], ["d", "e"]]
    assert rep.zero_variance == ["k"]
    assert len(rep.flagged) == 3
    kept = [n for n in names if n not in rep.flagged and n != "k"]
    sub = rep.matrix.loc[kept, kept].abs().to_numpy()
    np.fill_diagonal(sub, 0)
    assert sub.max() <= 0.9


def test_profile_and_breakdown_round_trip(small_forest, synthetic):
    m = medoid_for(compute_medoids(synthetic), "Bumps")
    prof = ceteris_paribus(small_forest, m, "Pixels_Areas", synthetic.X, grid_size=5)
    back = Profile.from_dict(prof.to_dict())
    assert np.array_equal(back.values, prof.values) and back.anchor_fault == "Bumps"
    bd = breakdown(small_forest, m, synthetic.X[:50])
    bback = Breakdown.from_dict(bd.to_dict())
    assert np.array_equal(bback.contributions, bd.contributions) and bback.intercept == bd.intercept


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_breakdown_telescoping_property(seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(40, 26))
    data[:, STEEL_INDEX] = rng.integers(0, 2, 40)
    anchor = data[rng.integers(0, 40)]
    bd = breakdown(additive_model(), anchor, data, target=1, ordering=list(rng.permutation(26)))
    assert abs(bd.intercept + bd.contributions.sum() - bd.prediction) <= 1e-9
