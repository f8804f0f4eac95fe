# FILE 10: evaluation.py
# Purpose: Direct (masked MAE/RMSE) and indirect (downstream prediction RMSE) scoring,
#          and the k-fold cross-validated benchmark that produces a BenchmarkReport.
# Dependencies: numpy, pydantic, joblib, trees.py, linear.py

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field

from app.core.base_imputers import FittedImputer, ImputerKind, fit_imputer
from app.core.data_matrix import DataMatrix, apply_standardizer, fit_standardizer, make_fold_plan
from app.core.errors import BenchmarkError, ConfigError, DataError, MetaImputeError
from app.core.linear import solve_ridge
from app.core.masking import Mask, apply_mcar_mask
from app.core.meta_imputer import (
    MIB_LABEL,
    MIB_NAME,
    FjMode,
    column_stats_from,
    fit_mib_from_base,
    resolve_roster,
    roster_names,
)
from app.core.rng import derive_seed
from app.core.trees import boost_fit, forest_fit

logger = logging.getLogger(__name__)

DOMINANCE_TOL = 1e-3
DEFAULT_IMPUTERS = [k.value for k in ImputerKind] + [MIB_NAME]


class DirectScores(BaseModel):
    masked_mae: float
    masked_rmse: float
    n_cells: int


class IndirectScores(BaseModel):
    pred_rmse_rf: float
    pred_rmse_gbt: float
    pred_rmse_lr: float


class DownstreamConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    forest_trees: int = Field(100, ge=1)
    forest_depth: int = Field(8, ge=0)
    boost_trees: int = Field(100, ge=1)
    boost_depth: int = Field(3, ge=0)
    boost_lr: float = Field(0.3, gt=0)
    linear_epsilon: float = Field(1e-8, ge=0)


class FoldResult(BaseModel):
    imputer: str
    fold: int
    direct: DirectScores
    train_masked_rmse: float
    indirect: Optional[IndirectScores] = None
    meta_weights: Optional[Dict[str, float]] = None


class AggregateRow(BaseModel):
    imputer: str
    n_folds: int
    masked_mae: float
    masked_rmse: float
    n_cells: int
    train_masked_rmse: float
    pred_rmse_rf: Optional[float] = None
    pred_rmse_gbt: Optional[float] = None
    pred_rmse_lr: Optional[float] = None
    meta_weights: Optional[Dict[str, float]] = None


class RunMetadata(BaseModel):
    seed: int
    rate: float
    folds: int
    dataset: str = ""
    target: str = ""
    config_hash: str = ""
    ridge_epsilon: float = 1e-6
    fj_mode: str = FjMode.ONE_HOT.value
    dominance_violations: List[str] = Field(default_factory=list)


class BenchmarkReport(BaseModel):
    metadata: RunMetadata
    folds: List[FoldResult]
    aggregate: List[AggregateRow]

    def row(self, imputer: str) -> AggregateRow:
        for r in self.aggregate:
            if r.imputer == imputer:
                return r
        raise KeyError(imputer)


class BenchmarkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    folds: int = Field(5, ge=2)
    # rate 0 leaves no cells to score
    rate: float = Field(0.1, gt=0.0, le=1.0)
    seed: int = Field(42, ge=0)
    imputers: List[str] = Field(default_factory=lambda: list(DEFAULT_IMPUTERS))
    hyperparameters: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    ridge_epsilon: float = Field(1e-6, ge=0)
    fj_mode: FjMode = FjMode.ONE_HOT
    evaluate_downstream: bool = True
    downstream: DownstreamConfig = Field(default_factory=DownstreamConfig)
    n_jobs: int = 1
    dataset: str = ""
    config_hash: str = ""


# ---------------------------------------------------------------------------
# Scores
# ---------------------------------------------------------------------------

def direct_scores(imputed: DataMatrix, mask: Mask) -> DirectScores:
    if imputed.shape != mask.shape:
        raise DataError(f"imputed matrix {imputed.shape} and mask {mask.shape} differ in shape")
    if mask.n_hidden == 0:
        raise DataError("cannot score an empty mask")
    rows, cols, truth = mask.cells()
    err = imputed.values[rows, cols] - truth
    if not np.isfinite(err).all():
        raise DataError("imputed values at masked cells must be finite")
    return DirectScores(
        masked_mae=float(np.mean(np.abs(err))),
        masked_rmse=float(np.sqrt(np.mean(err ** 2))),
        n_cells=int(err.size),
    )


def _rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def indirect_scores(
    train_imputed: DataMatrix,
    test_imputed: DataMatrix,
    target_col: int,
    downstream: Optional[DownstreamConfig] = None,
    seed: int = 0,
    train_rows: Optional[np.ndarray] = None,
    test_rows: Optional[np.ndarray] = None,
) -> IndirectScores:
    """
    Fits forest, boosted and linear models on the train completion (features -> target)
    and scores them on the test completion. train_rows/test_rows select the rows
    whose target was present in the source data.
    """
    downstream = downstream or DownstreamConfig()
    if not (train_imputed.is_complete and test_imputed.is_complete):
        raise DataError("downstream evaluation needs complete matrices")
    if train_imputed.n_cols != test_imputed.n_cols:
        raise DataError("train and test completions differ in width")
    if not 0 <= target_col < train_imputed.n_cols or train_imputed.n_cols < 2:
        raise DataError(f"invalid target column {target_col}")

    features = np.array([j for j in range(train_imputed.n_cols) if j != target_col])
    train_v = train_imputed.values if train_rows is None else train_imputed.values[train_rows]
    test_v = test_imputed.values if test_rows is None else test_imputed.values[test_rows]
    if len(train_v) == 0 or len(test_v) == 0:
        raise DataError("no rows with an observed target to evaluate on")
    X_train, y_train = train_v[:, features], train_v[:, target_col]
    X_test, y_test = test_v[:, features], test_v[:, target_col]

    forest = forest_fit(X_train, y_train, n_trees=downstream.forest_trees, max_depth=downstream.forest_depth,
                        seed=derive_seed(seed, "rf"))
    boosted = boost_fit(X_train, y_train, n_trees=downstream.boost_trees, max_depth=downstream.boost_depth,
                        lr=downstream.boost_lr, seed=derive_seed(seed, "gbt"))
    linear = solve_ridge(X_train, y_train, downstream.linear_epsilon)
    return IndirectScores(
        pred_rmse_rf=_rmse(forest.predict(X_test), y_test),
        pred_rmse_gbt=_rmse(boosted.predict(X_test), y_test),
        pred_rmse_lr=_rmse(linear.predict(X_test), y_test),
    )


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------

def _fit_all(specs, train_m: DataMatrix, seed: int, fold: int) -> List[FittedImputer]:
    fitted = []
    for spec in specs:
        seeded = spec.with_seed(derive_seed(seed, fold, spec.kind.value))
        try:
            fitted.append(fit_imputer(seeded, train_m))
        except MetaImputeError as e:
            raise BenchmarkError(spec.label, fold, e) from e
    return fitted


def _run_fold(data: DataMatrix, plan, fold: int, cfg: BenchmarkConfig) -> Tuple[List[FoldResult], List[str]]:
    reported, stacked = resolve_roster(cfg.imputers, cfg.hyperparameters)
    train = data.take_rows(plan.train_indices(fold))
    test = data.take_rows(plan.test_indices(fold))
    params = fit_standardizer(train)
    train_z, test_z = apply_standardizer(train, params), apply_standardizer(test, params)
    train_m, train_mask = apply_mcar_mask(train_z, cfg.rate, derive_seed(cfg.seed, fold, "train"))
    test_m, test_mask = apply_mcar_mask(test_z, cfg.rate, derive_seed(cfg.seed, fold, "test"))
    if train_mask.n_hidden == 0 or test_mask.n_hidden == 0:
        raise BenchmarkError("masking", fold, DataError("the mask hid no cells; raise the rate or use more rows"))
    logger.info(
        f"Fold {fold}: {train.n_rows} train / {test.n_rows} test rows, "
        f"{train_mask.n_hidden} / {test_mask.n_hidden} masked cells"
    )

    fitted = _fit_all(reported, train_m, cfg.seed, fold)
    entries: List[Tuple[str, FittedImputer, Optional[Dict[str, float]]]] = list(
        zip(roster_names(reported), fitted, [None] * len(fitted))
    )
    stacked_train_rmse: List[float] = []
    if stacked is not None:
        base = fitted if stacked is reported else _fit_all(stacked, train_m, cfg.seed, fold)
        column_stats = column_stats_from(params) if cfg.fj_mode == FjMode.ONE_HOT_STATS else None
        try:
            mib, ts = fit_mib_from_base(base, train_m, train_mask, cfg.ridge_epsilon, column_stats)
        except MetaImputeError as e:
            raise BenchmarkError(MIB_LABEL, fold, e) from e
        # ts holds every stacked base output at the hidden training cells, in mask order
        stacked_train_rmse = [_rmse(ts.X[:, k], ts.y) for k in range(ts.K)]
        entries.append((MIB_LABEL, mib, mib.model.imputer_weights()))

    target = data.target_col
    train_rows = test_rows = None
    if cfg.evaluate_downstream:
        train_rows = np.flatnonzero(train.observed[:, target])
        test_rows = np.flatnonzero(test.observed[:, target])

    results = []
    for name, imputer, weights in entries:
        try:
            train_done, test_done = imputer.transform(train_m), imputer.transform(test_m)
            indirect = None
            if cfg.evaluate_downstream:
                indirect = indirect_scores(train_done, test_done, target, cfg.downstream,
                                           derive_seed(cfg.seed, fold, "downstream"), train_rows, test_rows)
            results.append(FoldResult(
                imputer=name,
                fold=fold,
                direct=direct_scores(test_done, test_mask),
                train_masked_rmse=direct_scores(train_done, train_mask).masked_rmse,
                indirect=indirect,
                meta_weights=weights,
            ))
        except BenchmarkError:
            raise
        except MetaImputeError as e:
            raise BenchmarkError(name, fold, e) from e
        logger.info(f"Fold {fold} {name}: masked RMSE {results[-1].direct.masked_rmse:.4f}")

    return results, _dominance_violations(results, fold, stacked_train_rmse)


def _dominance_violations(results: Sequence[FoldResult], fold: int, stacked_train_rmse: Sequence[float]) -> List[str]:
    """MIB's training masked RMSE must not exceed the best stacked base imputer's by more than the tolerance."""
    mib = [r for r in results if r.imputer == MIB_LABEL]
    if not mib or not stacked_train_rmse:
        return []
    best = min(stacked_train_rmse)
    if mib[0].train_masked_rmse <= best + DOMINANCE_TOL:
        return []
    msg = f"fold {fold}: MIB train RMSE {mib[0].train_masked_rmse:.6f} > best base {best:.6f} + {DOMINANCE_TOL}"
    logger.warning(f"Dominance bound violated, {msg}")
    return [msg]


def _mean(values: Sequence[float]) -> float:
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def aggregate_folds(folds: Sequence[FoldResult]) -> List[AggregateRow]:
    """Fold means per imputer, in first-seen order."""
    names: List[str] = []
    for r in folds:
        if r.imputer not in names:
            names.append(r.imputer)
    rows = []
    for name in names:
        group = [r for r in folds if r.imputer == name]
        row = AggregateRow(
            imputer=name,
            n_folds=len(group),
            masked_mae=_mean([r.direct.masked_mae for r in group]),
            masked_rmse=_mean([r.direct.masked_rmse for r in group]),
            n_cells=sum(r.direct.n_cells for r in group),
            train_masked_rmse=_mean([r.train_masked_rmse for r in group]),
        )
        if all(r.indirect is not None for r in group):
            row.pred_rmse_rf = _mean([r.indirect.pred_rmse_rf for r in group])
            row.pred_rmse_gbt = _mean([r.indirect.pred_rmse_gbt for r in group])
            row.pred_rmse_lr = _mean([r.indirect.pred_rmse_lr for r in group])
        if all(r.meta_weights for r in group):
            keys = list(group[0].meta_weights)
            row.meta_weights = {k: _mean([r.meta_weights[k] for r in group]) for k in keys}
        rows.append(row)
    return rows


def run_benchmark(data: DataMatrix, cfg: BenchmarkConfig) -> BenchmarkReport:
    """
    Per fold: split, standardize on train, mask train and test independently,
    fit every base imputer on the masked train fold, stack them for MIB, then
    score every imputer directly on the test mask and indirectly via the
    downstream models. Fold results are reduced in fold order, so n_jobs never
    changes the report.
    """
    if cfg.evaluate_downstream and data.target_col is None:
        raise ConfigError("downstream evaluation needs a target column")
    resolve_roster(cfg.imputers, cfg.hyperparameters)
    plan = make_fold_plan(data.n_rows, cfg.folds, cfg.seed)

    if cfg.n_jobs == 1:
        outputs = [_run_fold(data, plan, fold, cfg) for fold in range(cfg.folds)]
    else:
        outputs = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
            delayed(_run_fold)(data, plan, fold, cfg) for fold in range(cfg.folds)
        )

    folds = [r for results, _ in outputs for r in results]
    violations = [v for _, found in outputs for v in found]
    metadata = RunMetadata(
        seed=cfg.seed,
        rate=cfg.rate,
        folds=cfg.folds,
        dataset=cfg.dataset,
        target=data.column_names[data.target_col] if data.target_col is not None else "",
        config_hash=cfg.config_hash,
        ridge_epsilon=cfg.ridge_epsilon,
        fj_mode=cfg.fj_mode.value,
        dominance_violations=violations,
    )
    return BenchmarkReport(metadata=metadata, folds=folds, aggregate=aggregate_folds(folds))
