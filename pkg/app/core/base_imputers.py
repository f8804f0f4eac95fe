# FILE 6: base_imputers.py
# Purpose: Imputer specs, the fit/transform contract, and the classical base imputers
#          (mean, median, mode, KNN, matrix factorization, gradient-boosted trees).
# Dependencies: numpy, pydantic

import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.data_matrix import DataMatrix
from app.core.errors import ImputationError, ImputerConfigError, TrainingError
from app.core.rng import derive_seed, make_rng
from app.core.trees import BoostedModel, boost_fit

logger = logging.getLogger(__name__)


class ImputerKind(str, Enum):
    MEAN = "mean"
    MEDIAN = "median"
    MODE = "mode"
    KNN = "knn"
    GBT = "gbt"
    MF = "mf"
    AUTOENCODER = "autoencoder"
    GAIN = "gain"


# Display labels, in report order.
LABELS: Dict[ImputerKind, str] = {
    ImputerKind.MEAN: "Mean",
    ImputerKind.MEDIAN: "Median",
    ImputerKind.MODE: "Mode",
    ImputerKind.KNN: "KNN",
    ImputerKind.GBT: "GBT",
    ImputerKind.MF: "Matrix Factorization",
    ImputerKind.AUTOENCODER: "Autoencoder",
    ImputerKind.GAIN: "GAIN",
}

# None means "derived from the data at fit time".
DEFAULTS: Dict[ImputerKind, Dict[str, Optional[float]]] = {
    ImputerKind.MEAN: {},
    ImputerKind.MEDIAN: {},
    ImputerKind.MODE: {},
    ImputerKind.KNN: {"k": 5},
    ImputerKind.GBT: {"trees": 100, "depth": 3, "lr": 0.3},
    ImputerKind.MF: {"rank": None, "reg": 0.1, "lr": 0.01, "epochs": 200},
    ImputerKind.AUTOENCODER: {"hidden": None, "epochs": 200, "batch_size": 64, "lr": 0.01},
    ImputerKind.GAIN: {
        "hidden": None, "iterations": 2000, "batch_size": 64, "lr": 0.005,
        "hint_rate": 0.9, "alpha": 10.0,
    },
}

INTEGER_KEYS = {"k", "trees", "depth", "rank", "epochs", "hidden", "batch_size", "iterations"}
# keys allowed to be zero (plus mf.epochs); everything else must be strictly positive
NON_NEGATIVE_KEYS = {"hint_rate"}


class ImputerSpec(BaseModel):
    """An imputer kind plus its named hyperparameters (missing keys take defaults)."""

    model_config = ConfigDict(frozen=True)

    kind: ImputerKind
    hyperparameters: Dict[str, float] = Field(default_factory=dict)
    random_seed: Optional[int] = Field(None, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _lift_seed(cls, data: Any):
        # a "seed" hyperparameter (config files, API requests) becomes the integer seed field
        if not isinstance(data, dict) or "seed" not in (data.get("hyperparameters") or {}):
            return data
        hyper = dict(data["hyperparameters"])
        raw = hyper.pop("seed")
        valid = isinstance(raw, (int, float)) and not isinstance(raw, bool) and np.isfinite(raw)
        if not valid or raw != int(raw) or raw < 0:
            raise ImputerConfigError(f"seed must be a non-negative integer, got {raw}")
        if data.get("random_seed") is not None and data["random_seed"] != int(raw):
            raise ImputerConfigError("seed given twice with different values")
        return {**data, "hyperparameters": hyper, "random_seed": int(raw)}

    @model_validator(mode="after")
    def _check_hyperparameters(self):
        allowed = set(DEFAULTS[self.kind])
        for key, value in self.hyperparameters.items():
            if key not in allowed:
                raise ImputerConfigError(
                    f"unknown hyperparameter '{key}' for {self.kind.value}; valid keys: {sorted(allowed)}"
                )
            if not np.isfinite(value):
                raise ImputerConfigError(f"{self.kind.value}.{key} must be finite")
            if key in INTEGER_KEYS and float(value) != int(value):
                raise ImputerConfigError(f"{self.kind.value}.{key} must be an integer, got {value}")
            if key in NON_NEGATIVE_KEYS or (self.kind == ImputerKind.MF and key == "epochs"):
                if value < 0:
                    raise ImputerConfigError(f"{self.kind.value}.{key} must be >= 0, got {value}")
            elif value <= 0:
                raise ImputerConfigError(f"{self.kind.value}.{key} must be positive, got {value}")
        if self.kind == ImputerKind.GAIN and self.hyperparameters.get("hint_rate", 0.0) > 1.0:
            raise ImputerConfigError("gain.hint_rate must be in [0, 1]")
        return self

    @property
    def label(self) -> str:
        return LABELS[self.kind]

    @property
    def seed(self) -> int:
        return 0 if self.random_seed is None else self.random_seed

    def get(self, key: str, default: Optional[float] = None) -> Optional[float]:
        if key in self.hyperparameters:
            value = self.hyperparameters[key]
        else:
            value = DEFAULTS[self.kind].get(key, default)
            if value is None:
                value = default
        if value is not None and key in INTEGER_KEYS:
            return int(value)
        return value

    def with_seed(self, seed: int) -> "ImputerSpec":
        """Copy carrying `seed` unless the spec already pins one."""
        if self.random_seed is not None:
            return self
        return ImputerSpec(kind=self.kind, hyperparameters=self.hyperparameters, random_seed=seed)


class FittedImputer(ABC):
    """
    A trained imputer. transform() never alters observed cells and never
    emits non-finite values. Instances are not mutated after fit.
    """

    def __init__(self, spec: ImputerSpec, n_cols: int):
        self.spec = spec
        self.n_cols = n_cols

    @property
    def label(self) -> str:
        return self.spec.label

    @abstractmethod
    def _candidates(self, m: DataMatrix) -> np.ndarray:
        """n x d array of proposed values; only the missing cells of m are read."""

    def transform(self, m: DataMatrix) -> DataMatrix:
        m.check_width(self.n_cols, f"{self.label} imputer")
        if m.is_complete:
            return m
        proposed = self._candidates(m)
        values = np.where(m.observed, m.values, proposed)
        if not np.isfinite(values).all():
            raise ImputationError(f"{self.label} imputer produced non-finite values")
        return m.completed(values)


def observed_column_means(m: DataMatrix) -> np.ndarray:
    """Per-column mean of observed cells; 0 for columns with none."""
    counts = m.observed.sum(axis=0)
    sums = np.where(m.observed, np.nan_to_num(m.values), 0.0).sum(axis=0)
    return np.divide(sums, counts, out=np.zeros(m.n_cols), where=counts > 0)


# ---------------------------------------------------------------------------
# Column statistics
# ---------------------------------------------------------------------------

class ColumnStatisticImputer(FittedImputer):
    def __init__(self, spec: ImputerSpec, statistics: np.ndarray):
        super().__init__(spec, len(statistics))
        self.statistics = statistics

    @staticmethod
    def statistic(column: np.ndarray) -> float:
        raise NotImplementedError

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "ColumnStatisticImputer":
        stats = np.zeros(train.n_cols)
        for j in range(train.n_cols):
            column = train.values[train.observed[:, j], j]
            if column.size == 0:
                logger.warning(f"{spec.label}: column '{train.column_names[j]}' has no observed cells; imputing 0")
                continue
            stats[j] = cls.statistic(column)
        return cls(spec, stats)

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        return np.broadcast_to(self.statistics, m.shape)


class MeanImputer(ColumnStatisticImputer):
    @staticmethod
    def statistic(column: np.ndarray) -> float:
        return float(np.mean(column))


class MedianImputer(ColumnStatisticImputer):
    @staticmethod
    def statistic(column: np.ndarray) -> float:
        # lower middle for even lengths
        return float(np.sort(column)[(column.size - 1) // 2])


class ModeImputer(ColumnStatisticImputer):
    @staticmethod
    def statistic(column: np.ndarray) -> float:
        values, counts = np.unique(column, return_counts=True)
        # np.unique sorts, argmax takes the first maximum: ties go to the smallest value
        return float(values[np.argmax(counts)])


# ---------------------------------------------------------------------------
# KNN
# ---------------------------------------------------------------------------

class KNNImputer(FittedImputer):
    """
    Stores the training rows. A missing cell (i, j) gets the unweighted mean of
    column j over the k nearest training rows that observe j, using the
    partial distance sqrt(d / |S| * sum over S of squared differences), S being
    the coordinates observed in both rows.
    """

    def __init__(self, spec: ImputerSpec, train_values: np.ndarray, train_observed: np.ndarray, col_means: np.ndarray):
        super().__init__(spec, train_values.shape[1])
        self.k = spec.get("k")
        self.train_values = train_values
        self.train_observed = train_observed
        self.col_means = col_means

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "KNNImputer":
        return cls(spec, train.filled(0.0), train.observed.copy(), observed_column_means(train))

    def distances(self, values: np.ndarray, observed: np.ndarray) -> np.ndarray:
        """Partial distance from one query row to every training row; inf when S is empty."""
        both = self.train_observed & observed[None, :]
        diff = np.where(both, self.train_values - np.nan_to_num(values)[None, :], 0.0)
        sq = np.sum(diff ** 2, axis=1)
        shared = both.sum(axis=1)
        dist = np.full(len(sq), np.inf)
        ok = shared > 0
        dist[ok] = np.sqrt(self.n_cols / shared[ok] * sq[ok])
        return dist

    def _value_from_distances(self, dist: np.ndarray, col: int) -> float:
        eligible = np.flatnonzero(self.train_observed[:, col] & np.isfinite(dist))
        if eligible.size == 0:
            logger.debug(f"KNN: no eligible neighbours for column {col}; using column mean")
            return float(self.col_means[col])
        nearest = eligible[np.argsort(dist[eligible], kind="stable")][: self.k]
        return float(np.mean(self.train_values[np.sort(nearest), col]))

    def impute_cell(self, m: DataMatrix, row: int, col: int) -> float:
        return self._value_from_distances(self.distances(m.values[row], m.observed[row]), col)

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        out = np.zeros(m.shape)
        for i in np.flatnonzero(~m.observed.all(axis=1)):
            dist = self.distances(m.values[i], m.observed[i])
            for j in np.flatnonzero(~m.observed[i]):
                out[i, j] = self._value_from_distances(dist, j)
        return out


def knn_impute_cell(f: KNNImputer, m: DataMatrix, row: int, col: int) -> float:
    return f.impute_cell(m, row, col)


# ---------------------------------------------------------------------------
# Matrix factorization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MFFactors:
    U: np.ndarray
    V: np.ndarray
    loss_history: Tuple[float, ...]


def _mf_objective(values, observed, U, V, reg) -> float:
    resid = np.where(observed, values - U @ V.T, 0.0)
    return float(np.sum(resid ** 2) + reg * (np.sum(U ** 2) + np.sum(V ** 2)))


def mf_fit(train: DataMatrix, rank: int, reg: float, epochs: int, lr: float, seed: int) -> MFFactors:
    """
    SGD over observed cells of sum (D_ij - U_i.V_j)^2 + reg (|U|^2 + |V|^2).
    Each epoch visits every observed cell once in a fresh seeded order and applies
        e = D_ij - U_i.V_j
        U_i += lr (e V_j - reg U_i),  V_j += lr (e U_i - reg V_j)
    Factors start from uniform(-0.01, 0.01). loss_history[0] is the initial objective.
    """
    n, d = train.shape
    if not 1 <= rank <= min(n, d):
        raise ImputerConfigError(f"mf rank must be in [1, {min(n, d)}], got {rank}")
    if reg <= 0 or lr <= 0 or epochs < 0:
        raise ImputerConfigError(f"invalid mf settings reg={reg} lr={lr} epochs={epochs}")

    rng = make_rng(seed)
    U = rng.uniform(-0.01, 0.01, size=(n, rank))
    V = rng.uniform(-0.01, 0.01, size=(d, rank))
    values = train.filled(0.0)
    rows, cols = np.nonzero(train.observed)
    targets = values[rows, cols]

    history = [_mf_objective(values, train.observed, U, V, reg)]
    for epoch in range(epochs):
        for z in rng.permutation(rows.size):
            i, j = rows[z], cols[z]
            u, v = U[i].copy(), V[j]
            e = targets[z] - u @ v
            U[i] = u + lr * (e * v - reg * u)
            V[j] = v + lr * (e * u - reg * v)
        history.append(_mf_objective(values, train.observed, U, V, reg))
        if not np.isfinite(history[-1]):
            raise TrainingError(f"matrix factorization diverged at epoch {epoch}; lower mf.lr")
        logger.debug(f"MF epoch {epoch}: loss {history[-1]:.6g}")
    return MFFactors(U=U, V=V, loss_history=tuple(history))


def _fingerprint(m: DataMatrix) -> str:
    h = hashlib.sha256()
    h.update(m.observed.tobytes())
    h.update(m.filled(0.0).tobytes())
    return h.hexdigest()


class MatrixFactorizationImputer(FittedImputer):
    """
    Fills (i, j) with U_i . V_j. Rows of the training matrix use the learned U;
    rows of any other matrix get U_i by ridge fold-in on their observed cells.
    """

    def __init__(self, spec: ImputerSpec, factors: MFFactors, reg: float, train_fingerprint: str):
        super().__init__(spec, factors.V.shape[0])
        self.factors = factors
        self.reg = reg
        self.train_fingerprint = train_fingerprint

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "MatrixFactorizationImputer":
        default_rank = max(1, min(8, train.n_cols - 1, train.n_rows))
        rank = spec.get("rank", default_rank)
        reg = spec.get("reg")
        factors = mf_fit(train, rank, reg, spec.get("epochs"), spec.get("lr"), spec.seed)
        return cls(spec, factors, reg, _fingerprint(train))

    def fold_in(self, m: DataMatrix) -> np.ndarray:
        V = self.factors.V
        rank = V.shape[1]
        U = np.zeros((m.n_rows, rank))
        values = m.filled(0.0)
        for i in range(m.n_rows):
            obs = m.observed[i]
            if not obs.any():
                continue
            Vs = V[obs]
            U[i] = np.linalg.solve(Vs.T @ Vs + self.reg * np.eye(rank), Vs.T @ values[i, obs])
        return U

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        if m.n_rows == self.factors.U.shape[0] and _fingerprint(m) == self.train_fingerprint:
            U = self.factors.U
        else:
            U = self.fold_in(m)
        return U @ self.factors.V.T


# ---------------------------------------------------------------------------
# Gradient-boosted trees
# ---------------------------------------------------------------------------

def gbt_impute_fit(
    train: DataMatrix, trees: int, depth: int, lr: float, seed: int
) -> Dict[int, Optional[BoostedModel]]:
    """Per-column ensembles; None marks a pass-through column (fully observed, or never observed)."""
    filled = train.filled(observed_column_means(train))
    models: Dict[int, Optional[BoostedModel]] = {}
    for j in range(train.n_cols):
        rows = train.observed[:, j]
        if rows.all():
            models[j] = None
            continue
        if not rows.any():
            logger.warning(f"GBT: column '{train.column_names[j]}' has no observed cells; imputing 0")
            models[j] = None
            continue
        models[j] = boost_fit(
            np.delete(filled[rows], j, axis=1),
            train.values[rows, j],
            n_trees=trees,
            max_depth=depth,
            lr=lr,
            seed=derive_seed(seed, "gbt", j),
        )
    return models


class GBTImputer(FittedImputer):
    """
    One boosted ensemble per column that has missing cells at fit time, trained
    on the rows observing that column with the other columns mean-filled.
    Single pass, no chaining.
    """

    def __init__(self, spec: ImputerSpec, means: np.ndarray, models: Dict[int, Optional[BoostedModel]]):
        super().__init__(spec, len(means))
        self.means = means
        self.models = models

    @classmethod
    def fit(cls, spec: ImputerSpec, train: DataMatrix) -> "GBTImputer":
        models = gbt_impute_fit(train, spec.get("trees"), spec.get("depth"), spec.get("lr"), spec.seed)
        return cls(spec, observed_column_means(train), models)

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        filled = m.filled(self.means)
        out = np.array(filled)
        for j in np.flatnonzero(~m.observed.all(axis=0)):
            missing = ~m.observed[:, j]
            model = self.models[j]
            if model is None:
                logger.warning(f"GBT: column {j} had no model at fit time; using the column mean")
                continue
            out[missing, j] = model.predict(np.delete(filled[missing], j, axis=1))
        return out


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

CLASSICAL = {
    ImputerKind.MEAN: MeanImputer,
    ImputerKind.MEDIAN: MedianImputer,
    ImputerKind.MODE: ModeImputer,
    ImputerKind.KNN: KNNImputer,
    ImputerKind.MF: MatrixFactorizationImputer,
    ImputerKind.GBT: GBTImputer,
}


def fit_imputer(spec: ImputerSpec, train: DataMatrix) -> FittedImputer:
    """Trains the imputer described by `spec` on `train` (standardized)."""
    if spec.kind in CLASSICAL:
        return CLASSICAL[spec.kind].fit(spec, train)
    from app.core import deep_imputers

    if spec.kind == ImputerKind.AUTOENCODER:
        return deep_imputers.AutoencoderImputer.fit(spec, train)
    return deep_imputers.GainImputer.fit(spec, train)


def transform(f: FittedImputer, m: DataMatrix) -> DataMatrix:
    return f.transform(m)


def default_roster() -> List[ImputerSpec]:
    return [ImputerSpec(kind=kind) for kind in ImputerKind]
