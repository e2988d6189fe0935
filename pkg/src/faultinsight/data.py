"""Steel-plates fault table: schema, loading, export and summaries.

The raw UCI file has 34 unlabeled columns: 25 numeric measurements, two
one-hot steel-type indicators and seven one-hot fault indicators.  Loading
collapses the indicators into a categorical ``TypeOfSteel`` predictor and a
single ``Fault`` label, which leaves 26 predictors per plate.

Inside the package the table is held as a float matrix in ``FEATURES`` order
with ``TypeOfSteel`` coded 0 (A300) / 1 (A400), and an integer label vector
indexing ``FAULTS``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

RAW_MEASUREMENTS_HEAD = (
    "X_Minimum", "X_Maximum", "Y_Minimum", "Y_Maximum", "Pixels_Areas",
    "X_Perimeter", "Y_Perimeter", "Sum_of_Luminosity", "Minimum_of_Luminosity",
    "Maximum_of_Luminosity", "Length_of_Conveyer",
)
RAW_MEASUREMENTS_TAIL = (
    "Steel_Plate_Thickness", "Edges_Index", "Empty_Index", "Square_Index",
    "Outside_X_Index", "Edges_X_Index", "Edges_Y_Index", "Outside_Global_Index",
    "LogOfAreas", "Log_X_Index", "Log_Y_Index", "Orientation_Index",
    "Luminosity_Index", "SigmoidOfAreas",
)
STEEL_COLUMN = "TypeOfSteel"
STEEL_LEVELS = ("A300", "A400")
LABEL_COLUMN = "Fault"
PROVENANCE_COLUMN = "provenance"

# Predictor order used everywhere in the package.
FEATURES = RAW_MEASUREMENTS_HEAD + (STEEL_COLUMN,) + RAW_MEASUREMENTS_TAIL
NUMERIC_FEATURES = tuple(f for f in FEATURES if f != STEEL_COLUMN)
STEEL_INDEX = FEATURES.index(STEEL_COLUMN)

# Alphabetical; this is also the row/column order of confusion matrices.
FAULTS = ("Bumps", "Common_Other", "Dirtiness", "K_Scratch", "Pastry", "Stains", "Z_Scratch")
# Order of the seven indicator columns at the end of a raw record.
RAW_FAULT_ORDER = ("Pastry", "Z_Scratch", "K_Scratch", "Stains", "Dirtiness", "Bumps", "Common_Other")

N_RAW_COLUMNS = len(RAW_MEASUREMENTS_HEAD) + 2 + len(RAW_MEASUREMENTS_TAIL) + len(RAW_FAULT_ORDER)

PROVENANCE_TAGS = ("original", "duplicated", "synthetic")

_MISSING_TOKENS = {"", "na", "nan", "?", "null", "none"}


class DataFormatError(ValueError):
    """Raised when an input file does not match the expected layout."""


@dataclass(frozen=True, eq=False)
class FaultTable:
    """Validated, read-only fault table.

    Parameters
    ----------
    X : ndarray of shape (n_rows, 26)
        Predictors in ``FEATURES`` order; ``TypeOfSteel`` coded 0/1.
    y : ndarray of shape (n_rows,)
        Integer codes into ``FAULTS``.
    provenance : ndarray of str, optional
        Per-row origin tag for balanced tables.
    """

    X: np.ndarray
    y: np.ndarray
    provenance: np.ndarray | None = None
    feature_names: tuple[str, ...] = field(default=FEATURES)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError(f"X must have shape (n, {len(self.feature_names)}), got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("y must be one label per row")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        if y.size and (y.min() < 0 or y.max() >= len(FAULTS)):
            raise ValueError("label codes out of range")
        steel = X[:, STEEL_INDEX] if STEEL_COLUMN in self.feature_names else np.zeros(0)
        if steel.size and not np.all((steel == 0) | (steel == 1)):
            raise ValueError("TypeOfSteel must be coded 0 (A300) or 1 (A400)")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.provenance is not None:
            prov = np.asarray(self.provenance, dtype=object)
            if prov.shape != y.shape:
                raise ValueError("provenance must have one tag per row")
            bad = set(prov) - set(PROVENANCE_TAGS)
            if bad:
                raise ValueError(f"unknown provenance tags: {sorted(bad)}")
            prov.flags.writeable = False
            object.__setattr__(self, "provenance", prov)

    def __len__(self):
        return self.X.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FaultTable):
            return NotImplemented
        same_prov = (self.provenance is None and other.provenance is None) or (
            self.provenance is not None
            and other.provenance is not None
            and np.array_equal(self.provenance, other.provenance)
        )
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
            and same_prov
        )

    @property
    def labels(self) -> np.ndarray:
        return np.asarray(FAULTS, dtype=object)[self.y]

    @property
    def steel(self) -> np.ndarray:
        return np.asarray(STEEL_LEVELS, dtype=object)[self.X[:, STEEL_INDEX].astype(int)]

    def subset(self, idx) -> FaultTable:
        idx = np.asarray(idx)
        prov = None if self.provenance is None else self.provenance[idx]
        return FaultTable(self.X[idx], self.y[idx], prov, self.feature_names)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=list(self.feature_names))
        df[STEEL_COLUMN] = self.steel
        df[LABEL_COLUMN] = self.labels
        if self.provenance is not None:
            df[PROVENANCE_COLUMN] = self.provenance
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> FaultTable:
        missing = [c for c in FEATURES + (LABEL_COLUMN,) if c not in df.columns]
        if missing:
            raise DataFormatError(f"missing columns: {missing}")
        X = np.empty((len(df), len(FEATURES)))
        for j, name in enumerate(FEATURES):
            col = df[name]
            if name == STEEL_COLUMN:
                X[:, j] = [_steel_code(v, i, j) for i, v in enumerate(col)]
            else:
                X[:, j] = col.to_numpy(dtype=np.float64)
        y = [_fault_code(v, i) for i, v in enumerate(df[LABEL_COLUMN])]
        prov = df[PROVENANCE_COLUMN].to_numpy(dtype=object) if PROVENANCE_COLUMN in df.columns else None
        return cls(X, np.asarray(y), prov)


def _steel_code(value, row, col):
    try:
        return STEEL_LEVELS.index(str(value).strip())
    except ValueError:
        raise DataFormatError(f"row {row}, column {col}: unknown steel type {value!r}") from None


def _fault_code(value, row):
    try:
        return FAULTS.index(str(value).strip())
    except ValueError:
        raise DataFormatError(f"row {row}: unknown fault label {value!r}") from None


def _split_line(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return line.split()
    return next(csv.reader([line], delimiter=delimiter))


def _detect_delimiter(first_line: str) -> str | None:
    if "\t" in first_line:
        return "\t"
    if "," in first_line:
        return ","
    return None  # runs of blanks


def _parse_number(token: str, row: int, col: int) -> float:
    tok = token.strip()
    if tok.lower() in _MISSING_TOKENS:
        raise DataFormatError(f"row {row}, column {col}: missing value")
    try:
        value = float(tok)
    except ValueError:
        raise DataFormatError(f"row {row}, column {col}: cannot parse {token!r} as a number") from None
    if not np.isfinite(value):
        raise DataFormatError(f"row {row}, column {col}: non-finite value {token!r}")
    return value


def _one_hot_position(values, row, first_col, what):
    hot = []
    for k, v in enumerate(values):
        if v not in (0.0, 1.0):
            raise DataFormatError(f"row {row}, column {first_col + k}: {what} flag must be 0 or 1, got {v}")
        if v == 1.0:
            hot.append(k)
    if len(hot) != 1:
        raise DataFormatError(f"row {row}: ambiguous one-hot {what} encoding ({len(hot)} flags set)")
    return hot[0]


def _read_lines(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    text = path.read_text()
    return [ln for ln in text.splitlines() if ln.strip()]


def ingest(path, format: str = "raw") -> FaultTable:
    """Load a fault table.

    ``format="raw"`` reads the headerless 34-column UCI layout (tab, comma or
    blank separated); ``format="cleaned"`` reads a file written by
    :func:`export`.
    """
    if format == "raw":
        return _ingest_raw(_read_lines(path))
    if format == "cleaned":
        return _ingest_cleaned(_read_lines(path))
    raise ValueError(f"unknown format tag {format!r}; expected 'raw' or 'cleaned'")


def read_table(path, format: str = "auto") -> FaultTable:
    """:func:`ingest` that also accepts ``format="auto"`` (a header row means cleaned)."""
    if format == "auto":
        lines = _read_lines(path)
        format = "cleaned" if lines and any(c.isalpha() for c in lines[0]) else "raw"
    return ingest(path, format=format)


def _ingest_raw(lines: list[str]) -> FaultTable:
    if not lines:
        raise DataFormatError("empty file")
    delim = _detect_delimiter(lines[0])
    n_head = len(RAW_MEASUREMENTS_HEAD)
    n_tail = len(RAW_MEASUREMENTS_TAIL)
    X = np.empty((len(lines), len(FEATURES)))
    y = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines):
        tokens = _split_line(line, delim)
        if len(tokens) != N_RAW_COLUMNS:
            raise DataFormatError(f"row {i}: expected {N_RAW_COLUMNS} columns, found {len(tokens)}")
        vals = [_parse_number(t, i, j) for j, t in enumerate(tokens)]
        steel = _one_hot_position(vals[n_head:n_head + 2], i, n_head, "steel type")
        fault_start = n_head + 2 + n_tail
        fault = _one_hot_position(vals[fault_start:], i, fault_start, "fault")
        X[i, :n_head] = vals[:n_head]
        X[i, n_head] = steel
        X[i, n_head + 1:] = vals[n_head + 2:fault_start]
        y[i] = FAULTS.index(RAW_FAULT_ORDER[fault])
    return FaultTable(X, y)


def _ingest_cleaned(lines: list[str]) -> FaultTable:
    if not lines:
        raise DataFormatError("empty file")
    delim = _detect_delimiter(lines[0])
    header = [h.strip() for h in _split_line(lines[0], delim)]
    expected = set(FEATURES) | {LABEL_COLUMN}
    unknown = set(header) - expected - {PROVENANCE_COLUMN}
    missing = expected - set(header)
    if unknown or missing:
        raise DataFormatError(f"header mismatch: missing {sorted(missing)}, unexpected {sorted(unknown)}")
    pos = {name: k for k, name in enumerate(header)}
    n = len(lines) - 1
    X = np.empty((n, len(FEATURES)))
    y = np.empty(n, dtype=np.int64)
    prov = [] if PROVENANCE_COLUMN in pos else None
    for i, line in enumerate(lines[1:]):
        tokens = _split_line(line, delim)
        if len(tokens) != len(header):
            raise DataFormatError(f"row {i}: expected {len(header)} columns, found {len(tokens)}")
        for j, name in enumerate(FEATURES):
            k = pos[name]
            if name == STEEL_COLUMN:
                X[i, j] = _steel_code(tokens[k], i, k)
            else:
                X[i, j] = _parse_number(tokens[k], i, k)
        y[i] = _fault_code(tokens[pos[LABEL_COLUMN]], i)
        if prov is not None:
            prov.append(tokens[pos[PROVENANCE_COLUMN]].strip())
    return FaultTable(X, y, prov)


def _format_number(v: float) -> str:
    # shortest round-tripping repr
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def export(table: FaultTable, path=None, delimiter: str = ",") -> str:
    """Write ``table`` in the cleaned named-column layout.

    Returns the text; also writes it to ``path`` when given.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    header = list(FEATURES) + [LABEL_COLUMN]
    if table.provenance is not None:
        header.append(PROVENANCE_COLUMN)
    writer.writerow(header)
    steel = table.steel
    labels = table.labels
    for i in range(len(table)):
        row = [
            steel[i] if j == STEEL_INDEX else _format_number(v)
            for j, v in enumerate(table.X[i])
        ]
        row.append(labels[i])
        if table.provenance is not None:
            row.append(table.provenance[i])
        writer.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def class_counts(table: FaultTable) -> dict[str, int]:
    """Rows per fault, in ``FAULTS`` order."""
    if len(table) == 0:
        raise ValueError("class_counts requires a non-empty table")
    counts = np.bincount(table.y, minlength=len(FAULTS))
    return {name: int(c) for name, c in zip(FAULTS, counts)}


def crosstab_steel_fault(table: FaultTable) -> pd.DataFrame:
    """7 x 2 count matrix of fault by steel type."""
    if len(table) == 0:
        raise ValueError("crosstab_steel_fault requires a non-empty table")
    mat = np.zeros((len(FAULTS), len(STEEL_LEVELS)), dtype=np.int64)
    np.add.at(mat, (table.y, table.X[:, STEEL_INDEX].astype(int)), 1)
    return pd.DataFrame(mat, index=list(FAULTS), columns=list(STEEL_LEVELS))


# Published per-class row counts and steel split of the reference data.
REFERENCE_CROSSTAB = {
    "Bumps": (279, 123),
    "Common_Other": (266, 407),
    "Dirtiness": (9, 46),
    "K_Scratch": (1, 390),
    "Pastry": (49, 109),
    "Stains": (1, 71),
    "Z_Scratch": (172, 18),
}


def make_synthetic(crosstab: dict[str, tuple[int, int]] | None = None, seed: int = 0) -> FaultTable:
    """Generate a stand-in table with the steel-plates schema.

    Class sizes and steel split follow ``crosstab`` (the reference split by
    default).  Distributions are invented: each fault gets its own location
    for a handful of driving features, with Bumps and Common_Other drawn
    close together, and the derived geometry/luminosity columns are computed
    from the drawn ones so the usual strong correlations exist.  Intended for
    demos and tests when the real file is not at hand.
    """
    crosstab = REFERENCE_CROSSTAB if crosstab is None else crosstab
    rng = np.random.default_rng(seed)
    # per fault: conveyer, thickness, log-area, x-centre, y-centre, lum-min, orientation, empty
    centres = {
        "Bumps": (1620, 70, 2.1, 860, 1.5e6, 91, 0.10, 0.33),
        "Common_Other": (1400, 75, 2.2, 660, 0.9e6, 97, 0.18, 0.42),
        "Dirtiness": (1364, 100, 2.2, 630, 2.0e6, 107, 0.80, 0.40),
        "K_Scratch": (1362, 40, 3.8, 130, 1.5e6, 41, -0.52, 0.46),
        "Pastry": (1648, 85, 2.3, 830, 1.1e6, 80, 0.67, 0.32),
        "Stains": (1358, 50, 1.2, 757, 1.1e6, 115, -0.27, 0.41),
        "Z_Scratch": (1356, 70, 2.2, 115, 1.2e6, 93, 0.35, 0.46),
    }
    Xs, ys = [], []
    for fault in FAULTS:
        n300, n400 = crosstab.get(fault, (0, 0))
        n = n300 + n400
        if n == 0:
            continue
        conv, thick, loga, xc, yc, lmin, orient, empty = centres[fault]
        steel = np.r_[np.zeros(n300), np.ones(n400)]
        rng.shuffle(steel)
        log_area = rng.normal(loga, 0.35, n)
        area = np.round(10 ** log_area) + 1
        width = np.maximum(1, np.round(np.sqrt(area) * rng.uniform(0.6, 1.6, n)))
        height = np.maximum(1, np.round(area / width * rng.uniform(0.8, 1.2, n)))
        x_min = np.clip(np.round(rng.normal(xc, 180, n)), 0, 1700)
        y_min = np.clip(np.round(rng.normal(yc, 3e5, n)), 6700, 1.3e7)
        lum_mean = rng.normal(110, 8, n)
        cols = {
            "X_Minimum": x_min,
            "X_Maximum": x_min + width,
            "Y_Minimum": y_min,
            "Y_Maximum": y_min + height,
            "Pixels_Areas": area,
            "X_Perimeter": np.round(2 * width * rng.uniform(0.9, 1.2, n)),
            "Y_Perimeter": np.round(2 * height * rng.uniform(0.9, 1.2, n)),
            "Sum_of_Luminosity": np.round(area * lum_mean),
            "Minimum_of_Luminosity": np.clip(np.round(rng.normal(lmin, 12, n)), 0, 203),
            "Maximum_of_Luminosity": np.clip(np.round(rng.normal(128, 8, n)), 37, 253),
            "Length_of_Conveyer": np.round(rng.normal(conv, 60, n)),
            STEEL_COLUMN: steel,
            "Steel_Plate_Thickness": rng.choice([thick, thick, thick + 10, max(40, thick - 20), 200], n),
            "Edges_Index": rng.beta(2, 3, n),
            "Empty_Index": np.clip(rng.normal(empty, 0.08, n), 0, 0.95),
            "Square_Index": rng.beta(3, 2, n),
            "Outside_X_Index": width / 1700,
            "Edges_X_Index": rng.beta(4, 3, n),
            "Edges_Y_Index": np.clip(rng.beta(5, 2, n) + 0.1, 0, 1),
            "Outside_Global_Index": rng.choice([0.0, 0.5, 1.0], n, p=[0.3, 0.1, 0.6]),
            "LogOfAreas": np.log10(area),
            "Log_X_Index": np.log10(width),
            "Log_Y_Index": np.log10(height),
            "Orientation_Index": np.clip(rng.normal(orient, 0.3, n), -0.99, 0.99),
            "Luminosity_Index": np.clip(rng.normal(-0.12, 0.1, n), -1, 1),
            "SigmoidOfAreas": 1 / (1 + np.exp(-(log_area - 2.2) * 2.5)),
        }
        Xs.append(np.column_stack([cols[f] for f in FEATURES]))
        ys.append(np.full(n, FAULTS.index(fault)))
    X = np.vstack(Xs)
    y = np.concatenate(ys)
    order = rng.permutation(len(y))
    return FaultTable(X[order], y[order])
