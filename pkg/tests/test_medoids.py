import numpy as np
import pytest

from faultinsight.data import FAULTS, FEATURES, STEEL_INDEX, FaultTable
from faultinsight.medoids import compute_medoids, load_medoids, medoid_for, save_medoids, scale_for_radar


def tiny_table():
    # two rows per fault; Bumps gets a third row to exercise odd sizes
    rows, y = [], []
    for c in range(7):
        for v in (1.0, 4.0):
            r = np.full(26, v + c)
            r[STEEL_INDEX] = 1.0 if v == 4.0 else 0.0
            rows.append(r)
            y.append(c)
    extra = np.full(26, 100.0)
    extra[STEEL_INDEX] = 1.0
    rows.append(extra)
    y.append(0)
    return FaultTable(np.array(rows), np.array(y))


def test_medians_by_hand():
    meds = {m.fault: m for m in compute_medoids(tiny_table())}
    # even size: midpoint of the two central values
    assert meds["Pastry"].values["Pixels_Areas"] == (1 + 4) / 2 + FAULTS.index("Pastry")
    # Bumps has values 1, 4, 100 -> 4
    assert meds["Bumps"].values["X_Minimum"] == 4.0
    assert meds["Bumps"].class_size == 3


def test_steel_mode_tie_goes_to_a300():
    meds = {m.fault: m for m in compute_medoids(tiny_table())}
    assert meds["Stains"].values["TypeOfSteel"] == "A300"  # one A300, one A400
    assert meds["Bumps"].values["TypeOfSteel"] == "A400"   # two of three are A400


def test_as_row_is_model_ready():
    m = medoid_for(compute_medoids(tiny_table()), "Bumps")
    row = m.as_row()
    assert row.shape == (26,) and row[STEEL_INDEX] == 1.0
    assert row[FEATURES.index("X_Minimum")] == 4.0


def test_medoids_match_pandas_groupby(synthetic):
    df = synthetic.to_frame()
    meds = {m.fault: m for m in compute_medoids(synthetic)}
    med = df.groupby("Fault")[[f for f in FEATURES if f != "TypeOfSteel"]].median()
    for fault in FAULTS:
        for f in med.columns:
            assert meds[fault].values[f] == med.loc[fault, f]


def test_radar_scaling_range(synthetic):
    scaled = scale_for_radar(compute_medoids(synthetic), synthetic)
    vals = [v for d in scaled.values() for v in d.values()]
    assert min(vals) >= 0 and max(vals) <= 1
    assert len(next(iter(scaled.values()))) == 25


def test_radar_constant_feature_maps_to_zero():
    t = tiny_table()
    X = t.X.copy()
    X[:, 0] = 7.0
    scaled = scale_for_radar(compute_medoids(FaultTable(X, t.y)), FaultTable(X, t.y))
    assert all(d["X_Minimum"] == 0.0 for d in scaled.values())


def test_missing_fault_raises():
    t = tiny_table()
    keep = t.y != 3
    with pytest.raises(ValueError, match="K_Scratch"):
        compute_medoids(FaultTable(t.X[keep], t.y[keep]))


def test_json_round_trip(tmp_path):
    meds = compute_medoids(tiny_table())
    save_medoids(meds, tmp_path / "m.json")
    assert load_medoids(tmp_path / "m.json") == meds
