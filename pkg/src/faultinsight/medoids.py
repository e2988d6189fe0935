"""Per-fault prototype rows (median / mode) and radar-chart scaling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import FAULTS, FEATURES, NUMERIC_FEATURES, STEEL_COLUMN, STEEL_INDEX, STEEL_LEVELS, FaultTable

MEDOIDS_FORMAT = "faultinsight.medoids"
MEDOIDS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Medoid:
    fault: str
    values: dict
    class_size: int

    def as_row(self) -> np.ndarray:
        """Model-ready vector in ``FEATURES`` order (steel coded 0/1)."""
        return np.array([
            STEEL_LEVELS.index(self.values[f]) if f == STEEL_COLUMN else self.values[f]
            for f in FEATURES
        ], dtype=np.float64)


def compute_medoids(table: FaultTable) -> list[Medoid]:
    """Median of each numeric feature and modal steel type, per fault.

    Even-sized classes take the midpoint of the two central values; a steel
    tie goes to A300.
    """
    out = []
    for code, fault in enumerate(FAULTS):
        rows = table.X[table.y == code]
        if rows.shape[0] == 0:
            raise ValueError(f"fault {fault} has no rows")
        values = {}
        for j, name in enumerate(FEATURES):
            if j == STEEL_INDEX:
                n400 = int(rows[:, j].sum())
                values[name] = STEEL_LEVELS[1] if n400 > rows.shape[0] - n400 else STEEL_LEVELS[0]
            else:
                values[name] = float(np.median(rows[:, j]))
        out.append(Medoid(fault, values, int(rows.shape[0])))
    return out


def medoid_for(medoids, fault: str) -> Medoid:
    for m in medoids:
        if m.fault == fault:
            return m
    raise KeyError(f"no medoid for fault {fault!r}")


def scale_for_radar(medoids, table: FaultTable) -> dict[str, dict[str, float]]:
    """Min-max scale each numeric medoid value with the full-table range.

    Features constant over the table map to 0.
    """
    out = {}
    lo = table.X.min(axis=0)
    hi = table.X.max(axis=0)
    for m in medoids:
        scaled = {}
        for name in NUMERIC_FEATURES:
            j = FEATURES.index(name)
            span = hi[j] - lo[j]
            scaled[name] = 0.0 if span == 0 else float((m.values[name] - lo[j]) / span)
        out[m.fault] = scaled
    return out


def medoids_to_dict(medoids) -> dict:
    return {
        "format": MEDOIDS_FORMAT,
        "version": MEDOIDS_FORMAT_VERSION,
        "medoids": [{"fault": m.fault, "class_size": m.class_size, "values": m.values} for m in medoids],
    }


def medoids_from_dict(doc) -> list[Medoid]:
    if doc.get("format") != MEDOIDS_FORMAT:
        raise ValueError("not a medoids document")
    return [Medoid(d["fault"], dict(d["values"]), int(d["class_size"])) for d in doc["medoids"]]


def save_medoids(medoids, path):
    Path(path).write_text(json.dumps(medoids_to_dict(medoids), indent=1))


def load_medoids(path) -> list[Medoid]:
    return medoids_from_dict(json.loads(Path(path).read_text()))
