# FILE 9: meta_imputer.py
# Purpose: Stacks the base imputers: builds per-cell design vectors [base outputs; f_j],
#          fits the linear meta-model on artificially hidden cells, and completes matrices.
# Dependencies: numpy, pydantic, linear.py

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from app.core.base_imputers import FittedImputer, ImputerKind, ImputerSpec, default_roster, fit_imputer
from app.core.data_matrix import DataMatrix, StandardizationParams
from app.core.errors import ConfigError, DimensionMismatchError, ImputerConfigError, MetaModelError
from app.core.linear import normal_equation_residual, solve_ridge
from app.core.masking import Mask, apply_mcar_mask

logger = logging.getLogger(__name__)

MIB_NAME = "mib"
MIB_LABEL = "MIB"


class FjMode(str, Enum):
    ONE_HOT = "one-hot"
    ONE_HOT_STATS = "one-hot+stats"


@dataclass(frozen=True)
class MetaTrainingSet:
    """Row z is [base outputs at (i, j); one-hot(j); optional column mean/std of j]."""

    X: np.ndarray
    y: np.ndarray
    positions: np.ndarray  # N x 2 (row, col)
    K: int
    d: int
    fj_mode: FjMode = FjMode.ONE_HOT
    roster: Tuple[ImputerSpec, ...] = ()

    @property
    def n_rows(self) -> int:
        return len(self.y)

    @property
    def width(self) -> int:
        return self.X.shape[1]


def _roster_key(spec: ImputerSpec):
    return spec.kind, tuple(sorted(spec.hyperparameters.items()))


def roster_names(roster: Sequence[ImputerSpec]) -> List[str]:
    """Display labels, numbered when a kind appears more than once."""
    labels = [s.label for s in roster]
    out = []
    for i, label in enumerate(labels):
        if labels.count(label) > 1:
            out.append(f"{label} #{labels[:i + 1].count(label)}")
        else:
            out.append(label)
    return out


def _check_completions(completions: Sequence[DataMatrix], shape: Tuple[int, int]):
    for k, c in enumerate(completions):
        if c.shape != shape:
            raise DimensionMismatchError(f"completion {k} has shape {c.shape}, expected {shape}")
        if not c.is_complete:
            raise DimensionMismatchError(f"completion {k} still has missing cells")


def _design_rows(
    completions: Sequence[DataMatrix],
    rows: np.ndarray,
    cols: np.ndarray,
    d: int,
    column_stats: Optional[np.ndarray],
) -> np.ndarray:
    blocks = [np.column_stack([c.values[rows, cols] for c in completions]) if completions
              else np.zeros((len(rows), 0))]
    blocks.append(np.eye(d)[cols])
    if column_stats is not None:
        blocks.append(column_stats[:, cols].T)
    return np.hstack(blocks)


def column_stats_from(params: StandardizationParams) -> np.ndarray:
    return np.vstack([params.means, params.stds])


def assemble_training_set(
    completions: Sequence[DataMatrix],
    mask: Mask,
    d: int,
    column_stats: Optional[np.ndarray] = None,
    roster: Sequence[ImputerSpec] = (),
) -> MetaTrainingSet:
    if mask.shape[1] != d:
        raise DimensionMismatchError(f"mask has {mask.shape[1]} columns, expected {d}")
    _check_completions(completions, mask.shape)
    rows, cols, truth = mask.cells()
    X = _design_rows(completions, rows, cols, d, column_stats)
    return MetaTrainingSet(
        X=X,
        y=truth.astype(np.float64),
        positions=np.column_stack([rows, cols]).astype(np.int64),
        K=len(completions),
        d=d,
        fj_mode=FjMode.ONE_HOT if column_stats is None else FjMode.ONE_HOT_STATS,
        roster=tuple(roster),
    )


@dataclass(frozen=True)
class MetaModel:
    weights: np.ndarray
    intercept: float
    ridge_epsilon: float
    imputer_roster: Tuple[ImputerSpec, ...]
    d: int
    fj_mode: FjMode = FjMode.ONE_HOT
    column_stats: Optional[np.ndarray] = field(default=None)

    @property
    def K(self) -> int:
        return len(self.imputer_roster)

    def imputer_weights(self) -> Dict[str, float]:
        return {name: float(w) for name, w in zip(roster_names(self.imputer_roster), self.weights[: self.K])}

    def column_offsets(self) -> np.ndarray:
        return self.weights[self.K:self.K + self.d]

    def to_text(self) -> str:
        """Line-oriented key=value text; floats written with float.hex so a reload is bit-identical."""
        lines = [
            "# meta-model",
            f"d={self.d}",
            f"fj_mode={self.fj_mode.value}",
            f"ridge_epsilon={float(self.ridge_epsilon).hex()}",
            f"intercept={float(self.intercept).hex()}",
            f"weights={','.join(float(w).hex() for w in self.weights)}",
            "roster=" + json.dumps([s.model_dump(mode="json") for s in self.imputer_roster], sort_keys=True),
        ]
        if self.column_stats is not None:
            lines.append(f"column_means={','.join(float(v).hex() for v in self.column_stats[0])}")
            lines.append(f"column_stds={','.join(float(v).hex() for v in self.column_stats[1])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetaModel":
        items: Dict[str, str] = {}
        for line in text.splitlines():
            if line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            items[key.strip()] = value.strip()
        try:
            def floats(key):
                return np.array([float.fromhex(v) for v in items[key].split(",")]) if items[key] else np.zeros(0)

            stats = None
            if "column_means" in items:
                stats = np.vstack([floats("column_means"), floats("column_stds")])
            return cls(
                weights=floats("weights"),
                intercept=float.fromhex(items["intercept"]),
                ridge_epsilon=float.fromhex(items["ridge_epsilon"]),
                imputer_roster=tuple(ImputerSpec(**s) for s in json.loads(items["roster"])),
                d=int(items["d"]),
                fj_mode=FjMode(items["fj_mode"]),
                column_stats=stats,
            )
        except (KeyError, ValueError) as e:
            raise MetaModelError(f"malformed meta-model text: {e}") from e


def fit_meta(ts: MetaTrainingSet, ridge_epsilon: float = 1e-6, column_stats: Optional[np.ndarray] = None) -> MetaModel:
    if ts.n_rows == 0:
        raise MetaModelError("meta training set is empty: no artificially hidden cells to learn from")
    if not (np.isfinite(ts.X).all() and np.isfinite(ts.y).all()):
        raise MetaModelError("meta training set contains non-finite entries")
    if ts.fj_mode == FjMode.ONE_HOT_STATS and column_stats is None:
        raise MetaModelError("one-hot+stats training set needs the column statistics it was built with")

    solution = solve_ridge(ts.X, ts.y, ridge_epsilon)
    resid = ts.y - solution.predict(ts.X)
    logger.info(
        f"Meta-model fit on {ts.n_rows} cells (K={ts.K}, d={ts.d}): "
        f"training RMSE {np.sqrt(np.mean(resid ** 2)):.4f}, "
        f"normal-equation residual {normal_equation_residual(ts.X, ts.y, solution):.2e}"
    )
    return MetaModel(
        weights=solution.weights,
        intercept=solution.intercept,
        ridge_epsilon=ridge_epsilon,
        imputer_roster=ts.roster,
        d=ts.d,
        fj_mode=ts.fj_mode,
        column_stats=column_stats if ts.fj_mode == FjMode.ONE_HOT_STATS else None,
    )


def predict_meta(
    model: MetaModel,
    completions: Sequence[DataMatrix],
    roster: Sequence[ImputerSpec],
    missing_cells,
    d: int,
) -> np.ndarray:
    """w.x + b for each (row, col) in missing_cells, with x assembled exactly as at fit time."""
    if len(completions) != model.K or len(roster) != model.K:
        raise MetaModelError(f"meta-model expects {model.K} base imputers, got {len(completions)}")
    if [_roster_key(s) for s in roster] != [_roster_key(s) for s in model.imputer_roster]:
        raise MetaModelError(
            f"roster {roster_names(roster)} does not match the fitted roster {roster_names(model.imputer_roster)}"
        )
    if d != model.d:
        raise DimensionMismatchError(f"meta-model was fit for {model.d} columns, got {d}")
    cells = np.asarray(missing_cells, dtype=np.int64).reshape(-1, 2)
    if cells.size == 0:
        return np.zeros(0)
    if completions:
        _check_completions(completions, completions[0].shape)
        if completions[0].n_cols != d:
            raise DimensionMismatchError(f"completions have {completions[0].n_cols} columns, expected {d}")
    X = _design_rows(completions, cells[:, 0], cells[:, 1], d, model.column_stats)
    return X @ model.weights + model.intercept


def mib_complete(model: MetaModel, base: Sequence[FittedImputer], m: DataMatrix) -> DataMatrix:
    if m.is_complete:
        return m
    completions = [f.transform(m) for f in base]
    rows, cols = np.nonzero(~m.observed)
    values = m.filled(np.zeros(m.n_cols))
    values[rows, cols] = predict_meta(model, completions, [f.spec for f in base], np.column_stack([rows, cols]), m.n_cols)
    return m.completed(values)


class MIBImputer(FittedImputer):
    """Fitted base imputers plus the meta-model that combines them."""

    def __init__(self, base: Sequence[FittedImputer], model: MetaModel, n_training_cells: int = 0):
        super().__init__(spec=None, n_cols=model.d)
        self.base = tuple(base)
        self.model = model
        self.n_training_cells = n_training_cells

    @property
    def label(self) -> str:
        return MIB_LABEL

    def _candidates(self, m: DataMatrix) -> np.ndarray:
        return mib_complete(self.model, self.base, m).values

    def transform(self, m: DataMatrix) -> DataMatrix:
        m.check_width(self.n_cols, "MIB imputer")
        out = mib_complete(self.model, self.base, m)
        if not np.isfinite(out.values).all():
            raise MetaModelError("meta-model produced non-finite imputations")
        return out


def fit_mib_from_base(
    base: Sequence[FittedImputer],
    masked_train: DataMatrix,
    mask: Mask,
    ridge_epsilon: float = 1e-6,
    column_stats: Optional[np.ndarray] = None,
) -> Tuple[MIBImputer, MetaTrainingSet]:
    """Meta-model from base imputers already fit on `masked_train`; `mask` holds the hidden truths."""
    completions = [f.transform(masked_train) for f in base]
    ts = assemble_training_set(completions, mask, masked_train.n_cols, column_stats, [f.spec for f in base])
    model = fit_meta(ts, ridge_epsilon, column_stats)
    return MIBImputer(base, model, ts.n_rows), ts


def fit_mib(
    roster: Sequence[ImputerSpec],
    train: DataMatrix,
    self_mask_rate: float,
    seed: int,
    ridge_epsilon: float = 1e-6,
    column_stats: Optional[np.ndarray] = None,
    mask: Optional[Mask] = None,
) -> MIBImputer:
    """
    Without `mask`, hides a self_mask_rate fraction of the observed non-target
    cells of `train` to obtain supervised pairs. With `mask`, its cells must
    already be unobserved in `train`.
    """
    if mask is None:
        train, mask = apply_mcar_mask(train, self_mask_rate, seed)
    elif (mask.hidden & train.observed).any():
        raise DimensionMismatchError("cells listed in the mask must be unobserved in the training matrix")
    if mask.n_hidden == 0:
        raise MetaModelError("self-masking hid no cells; raise the self-mask rate or supply more data")
    base = [fit_imputer(spec, train) for spec in roster]
    mib, _ = fit_mib_from_base(base, train, mask, ridge_epsilon, column_stats)
    return mib


def valid_imputer_names() -> List[str]:
    return [k.value for k in ImputerKind] + [MIB_NAME]


def _build_spec(name: str, hyperparameters: Dict[str, Dict[str, float]]) -> ImputerSpec:
    try:
        return ImputerSpec(kind=ImputerKind(name), hyperparameters=hyperparameters.get(name, {}))
    except ValidationError as e:
        raise ImputerConfigError(f"invalid hyperparameters for {name}: {e}") from e


def resolve_roster(
    names: Sequence[str], hyperparameters: Optional[Dict[str, Dict[str, float]]] = None
) -> Tuple[List[ImputerSpec], Optional[List[ImputerSpec]]]:
    """
    Splits a roster of imputer names into (reported base specs, specs MIB stacks).
    The second item is None without "mib"; MIB alone stacks every default base imputer.
    """
    hyperparameters = hyperparameters or {}
    if not names:
        raise ConfigError("imputer roster is empty")
    unknown = [n for n in names if n not in valid_imputer_names()]
    if unknown:
        raise ConfigError(f"unknown imputer(s) {unknown}; valid names: {', '.join(valid_imputer_names())}")
    base_names = [n for n in names if n != MIB_NAME]
    # MIB alone stacks every default kind, so each of them may be tuned
    tunable = set(base_names) if base_names else {k.value for k in ImputerKind}
    stray = sorted(set(hyperparameters) - tunable)
    if stray:
        raise ConfigError(f"hyperparameters given for imputers not in the roster: {stray}")

    base = [_build_spec(name, hyperparameters) for name in base_names]
    if MIB_NAME not in names:
        return base, None
    if base:
        return base, base
    return base, [_build_spec(spec.kind.value, hyperparameters) for spec in default_roster()]
