# FILE 2: data_matrix.py
# Purpose: Tabular data model, CSV ingestion/serialization, standardization and fold splitting.
# Dependencies: numpy, pandas

import csv
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.core.errors import DataError, DimensionMismatchError
from app.core.rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DataMatrix:
    """
    n x d table of float64 values with per-cell observedness.
    Unobserved cells hold NaN; nothing reads them.
    """

    values: np.ndarray
    observed: np.ndarray
    column_names: Tuple[str, ...]
    target_col: Optional[int] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        observed = np.array(self.observed, dtype=bool)
        names = tuple(str(c) for c in self.column_names)

        if values.ndim != 2 or observed.shape != values.shape:
            raise DimensionMismatchError(
                f"values {values.shape} and observed {observed.shape} must be the same 2-D shape"
            )
        n, d = values.shape
        if n < 1:
            raise DataError("matrix has zero rows")
        if len(names) != d:
            raise DimensionMismatchError(f"{len(names)} column names for {d} columns")
        if self.target_col is not None:
            if not 0 <= self.target_col < d:
                raise DataError(f"target column {self.target_col} outside [0, {d})")
            if d < 2:
                raise DataError("a target column needs at least one feature column beside it")
        if not np.isfinite(values[observed]).all():
            raise DataError("observed cells must hold finite values")

        values[~observed] = np.nan
        values.flags.writeable = False
        observed.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "column_names", names)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def is_complete(self) -> bool:
        return bool(self.observed.all())

    @property
    def feature_cols(self) -> np.ndarray:
        cols = np.arange(self.n_cols)
        if self.target_col is None:
            return cols
        return cols[cols != self.target_col]

    def filled(self, fill: np.ndarray) -> np.ndarray:
        """Writable copy of the values with column `fill[j]` at unobserved cells."""
        fill = np.broadcast_to(np.asarray(fill, dtype=np.float64), (self.n_cols,))
        return np.where(self.observed, np.nan_to_num(self.values), fill[None, :])

    def with_values(self, values: np.ndarray, observed: Optional[np.ndarray] = None) -> "DataMatrix":
        return DataMatrix(
            values=values,
            observed=self.observed if observed is None else observed,
            column_names=self.column_names,
            target_col=self.target_col,
        )

    def completed(self, values: np.ndarray) -> "DataMatrix":
        return self.with_values(values, np.ones(self.shape, dtype=bool))

    def take_rows(self, rows: Sequence[int]) -> "DataMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return DataMatrix(
            values=self.values[rows],
            observed=self.observed[rows],
            column_names=self.column_names,
            target_col=self.target_col,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.values), columns=list(self.column_names))

    def check_width(self, d: int, what: str = "matrix"):
        if self.n_cols != d:
            raise DimensionMismatchError(f"{what} expects {d} columns, got {self.n_cols}")


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    stds: np.ndarray

    @property
    def n_cols(self) -> int:
        return len(self.means)


@dataclass(frozen=True)
class FoldPlan:
    assignments: np.ndarray
    k: int
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _strip_metadata(text: str) -> str:
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    return "\n".join(lines[start:])


def _check_fields(body: str, source: str):
    """Every data row must have exactly as many fields as the header; header names must be unique."""
    rows = csv.reader(io.StringIO(body), quoting=csv.QUOTE_NONE)
    header = [c.strip() for c in next(rows)]
    duplicates = sorted({c for c in header if header.count(c) > 1})
    if duplicates:
        raise DataError(f"{source}: duplicate column names {duplicates}")
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataError(f"{source}: row {i} has {len(row)} fields, header has {len(header)}")


def parse_csv_text(text: str, target_name: Optional[str] = None, source: str = "<text>") -> DataMatrix:
    """
    Parses comma-separated text: header row first, empty field = missing.
    Leading '#' lines are metadata written by this toolkit and are skipped.
    """
    body = "\n".join(line for line in _strip_metadata(text).splitlines() if line.strip())
    if not body:
        raise DataError(f"{source}: no header row")
    _check_fields(body, source)

    try:
        frame = pd.read_csv(
            io.StringIO(body),
            dtype=str,
            keep_default_na=False,
            na_filter=False,
            quoting=csv.QUOTE_NONE,
            index_col=False,
        )
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"{source}: could not parse CSV: {e}") from e

    names = [str(c).strip() for c in frame.columns]
    if len(names) < 2:
        raise DataError(f"{source}: need at least 2 columns, found {len(names)}")
    if len(frame) == 0:
        raise DataError(f"{source}: no data rows")

    n, d = len(frame), len(names)
    values = np.empty((n, d), dtype=np.float64)
    observed = np.empty((n, d), dtype=bool)

    for j, raw_name in enumerate(frame.columns):
        fields = np.array([str(s).strip() for s in frame[raw_name].to_numpy()], dtype=object)
        empty = fields == ""
        try:
            # float() is correctly rounded, so 17-digit text round-trips bit-exactly
            parsed = np.where(empty, "nan", fields).astype(np.float64)
            ok = bool(np.isfinite(parsed[~empty]).all())
        except ValueError:
            ok = False
        if not ok:
            for i, field in enumerate(fields):
                if empty[i]:
                    continue
                try:
                    good = np.isfinite(float(field))
                except ValueError:
                    good = False
                if not good:
                    raise DataError(
                        f"{source}: non-numeric value '{field}' at row {i + 1}, column '{names[j]}'"
                    )
        values[:, j] = parsed
        observed[:, j] = ~empty

    target_col = None
    if target_name is not None:
        if target_name not in names:
            raise DataError(f"{source}: target column '{target_name}' not in header {names}")
        target_col = names.index(target_name)

    return DataMatrix(values=values, observed=observed, column_names=tuple(names), target_col=target_col)


def load_csv(path, target_name: Optional[str] = None) -> DataMatrix:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataError(f"data file not found: {path}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"could not read {path}: {e}") from e
    m = parse_csv_text(text, target_name=target_name, source=str(path))
    logger.info(f"Loaded {path}: {m.n_rows} rows x {m.n_cols} columns, {int((~m.observed).sum())} missing cells")
    return m


def format_metadata(metadata: Optional[Dict[str, object]]) -> str:
    if not metadata:
        return ""
    return "# " + " ".join(f"{k}={v}" for k, v in metadata.items()) + "\n"


def parse_metadata(line: str) -> Dict[str, str]:
    items = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            key, value = token.split("=", 1)
            items[key] = value
    return items


def to_csv_text(m: DataMatrix, metadata: Optional[Dict[str, object]] = None) -> str:
    lines = [",".join(m.column_names)]
    for row, obs in zip(m.values, m.observed):
        lines.append(",".join(format(v, ".17g") if o else "" for v, o in zip(row, obs)))
    return format_metadata(metadata) + "\n".join(lines) + "\n"


def write_csv(m: DataMatrix, path, metadata: Optional[Dict[str, object]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv_text(m, metadata), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

def fit_standardizer(m: DataMatrix) -> StandardizationParams:
    """Means and population stds over observed cells only."""
    means = np.zeros(m.n_cols)
    stds = np.zeros(m.n_cols)
    for j in range(m.n_cols):
        col = m.values[m.observed[:, j], j]
        if col.size == 0:
            logger.warning(f"Column '{m.column_names[j]}' has no observed cells; using mean 0, std 0")
            continue
        means[j] = col.mean()
        stds[j] = np.sqrt(np.mean((col - means[j]) ** 2))
    return StandardizationParams(means=means, stds=stds)


def apply_standardizer(m: DataMatrix, p: StandardizationParams) -> DataMatrix:
    """(v - mean) / std at observed cells; std = 0 columns map to 0."""
    m.check_width(p.n_cols, "standardizer")
    safe = np.where(p.stds > 0, p.stds, 1.0)
    z = np.where(p.stds > 0, (m.filled(p.means) - p.means) / safe, 0.0)
    return m.with_values(z)


def invert_standardizer(m: DataMatrix, p: StandardizationParams) -> DataMatrix:
    m.check_width(p.n_cols, "standardizer")
    raw = m.filled(np.zeros(m.n_cols)) * p.stds + p.means
    return m.with_values(raw)


def standardize_values(values: np.ndarray, cols: np.ndarray, p: StandardizationParams) -> np.ndarray:
    """Standardizes loose values that belong to the given columns."""
    stds = p.stds[cols]
    safe = np.where(stds > 0, stds, 1.0)
    return np.where(stds > 0, (values - p.means[cols]) / safe, 0.0)


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

def make_fold_plan(n: int, k: int, seed: int) -> FoldPlan:
    """Seeded shuffle of row indices, then contiguous chunks get fold ids 0..k-1."""
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    if k > n:
        raise DataError(f"cannot split {n} rows into {k} folds")
    order = make_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for fold, chunk in enumerate(np.array_split(order, k)):
        assignments[chunk] = fold
    assignments.flags.writeable = False
    return FoldPlan(assignments=assignments, k=k, seed=seed)
