# FILE 14: pipeline.py
# Purpose: Orchestrates the mask -> impute -> benchmark -> report flows shared by the CLI and the API.
# Dependencies: all previous modules, pydantic

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from app.core.base_imputers import ImputerKind, ImputerSpec, fit_imputer
from app.core.config import RunConfig
from app.core.data_matrix import (
    DataMatrix,
    apply_standardizer,
    fit_standardizer,
    invert_standardizer,
    load_csv,
    standardize_values,
    to_csv_text,
    write_csv,
)
from app.core.errors import ConfigError, DataError
from app.core.evaluation import AggregateRow, run_benchmark
from app.core.masking import Mask, apply_mcar_mask, load_mask, mask_from_positions, save_mask
from app.core.meta_imputer import (
    MIB_NAME,
    FjMode,
    column_stats_from,
    fit_mib,
    resolve_roster,
    valid_imputer_names,
)
from app.core.report import read_report, render_summary, write_report
from app.core.rng import derive_seed

logger = logging.getLogger(__name__)


class MaskResult(BaseModel):
    masked_path: Optional[str]
    mask_path: Optional[str]
    n_hidden: int
    seed: int
    rate: float
    config_hash: str
    total_time_ms: float


class ImputeResult(BaseModel):
    method: str
    output_path: Optional[str]
    n_imputed: int
    completed_csv: str
    self_mask_rate: Optional[float] = None
    n_training_cells: Optional[int] = None
    meta_weights: Optional[Dict[str, float]] = None
    config_hash: str
    total_time_ms: float


class BenchmarkResult(BaseModel):
    report_path: Optional[str]
    summary_path: Optional[str]
    summary: str
    aggregate: List[AggregateRow]
    dominance_violations: List[str]
    config_hash: str
    total_time_ms: float


class ReportResult(BaseModel):
    summary: str
    total_time_ms: float


def _elapsed_ms(start: float) -> float:
    return (time.time() - start) * 1000


class ImputationPipeline:
    def __init__(self, config: RunConfig):
        self.config = config
        self.config_hash = config.config_hash()

    # -- inputs ---------------------------------------------------------------

    def load_data(self, require_target: bool = False) -> DataMatrix:
        cfg = self.config
        if require_target and not cfg.target_name:
            raise ConfigError("a target column is required (--target or target=...)")
        if not cfg.data_path:
            raise ConfigError("no data file given (--data or data=...)")
        return load_csv(cfg.data_path, cfg.target_name)

    def _output_path(self, suffix: str) -> Path:
        stem = Path(self.config.data_path).stem if self.config.data_path else "data"
        return Path(self.config.output_dir) / f"{stem}.{suffix}"

    def _metadata(self, **extra) -> Dict[str, object]:
        md: Dict[str, object] = {"seed": self.config.seed, "config_hash": self.config_hash}
        md.update(extra)
        return md

    # -- mask -----------------------------------------------------------------

    def mask(self, data: Optional[DataMatrix] = None, write: bool = True) -> MaskResult:
        start_time = time.time()
        m = data if data is not None else self.load_data()
        masked, mask = apply_mcar_mask(m, self.config.missing_rate, self.config.seed, exclude_target=True)
        logger.info(f"Masked {mask.n_hidden} cells at rate {self.config.missing_rate}")

        masked_path = mask_path = None
        if write:
            md = self._metadata(rate=self.config.missing_rate)
            masked_path = str(write_csv(masked, self._output_path("masked.csv"), md))
            mask_path = str(save_mask(mask, self._output_path("mask.csv"), {"config_hash": self.config_hash}))
        return MaskResult(
            masked_path=masked_path,
            mask_path=mask_path,
            n_hidden=mask.n_hidden,
            seed=self.config.seed,
            rate=self.config.missing_rate,
            config_hash=self.config_hash,
            total_time_ms=_elapsed_ms(start_time),
        )

    # -- impute ---------------------------------------------------------------

    def _stacked_specs(self) -> List[ImputerSpec]:
        _, stacked = resolve_roster(self.config.imputers, self.config.hyperparameters)
        return stacked

    def _standardized_mask(self, mask: Mask, m: DataMatrix, params) -> Mask:
        if mask.shape != m.shape:
            raise DataError(f"mask sidecar shape {mask.shape} does not match data shape {m.shape}")
        rows, cols, truth = mask.cells()
        z = standardize_values(truth, cols, params)
        return mask_from_positions(mask.shape, zip(rows, cols, z), seed=mask.seed, rate=mask.rate)

    def impute(
        self,
        method: str,
        data: Optional[DataMatrix] = None,
        mask_file: Optional[str] = None,
        write: bool = True,
    ) -> ImputeResult:
        start_time = time.time()
        method = method.strip().lower()
        if method not in valid_imputer_names():
            raise ConfigError(f"unknown method '{method}'; valid names: {', '.join(valid_imputer_names())}")
        if method not in self.config.imputers:
            raise ConfigError(
                f"method '{method}' is not in the configured roster {self.config.imputers}; add it to --imputers"
            )
        cfg = self.config
        m = data if data is not None else self.load_data()
        params = fit_standardizer(m)
        z = apply_standardizer(m, params)
        extra: Dict[str, object] = {"method": method}
        self_rate = n_training = weights = None

        if method == MIB_NAME:
            specs = [s.with_seed(derive_seed(cfg.seed, s.kind.value)) for s in self._stacked_specs()]
            column_stats = column_stats_from(params) if cfg.fj_mode == FjMode.ONE_HOT_STATS else None
            mask = None
            if mask_file:
                mask = self._standardized_mask(load_mask(mask_file), m, params)
            else:
                self_rate = cfg.self_mask_rate
                extra["self_mask_rate"] = self_rate
            mib = fit_mib(specs, z, cfg.self_mask_rate, derive_seed(cfg.seed, "self-mask"),
                          cfg.ridge_epsilon, column_stats, mask=mask)
            done = mib.transform(z)
            weights = mib.model.imputer_weights()
            n_training = mib.n_training_cells
            extra["fj_mode"] = cfg.fj_mode.value
        else:
            spec = ImputerSpec(kind=ImputerKind(method), hyperparameters=cfg.hyperparameters.get(method, {}))
            fitted = fit_imputer(spec.with_seed(derive_seed(cfg.seed, method)), z)
            done = fitted.transform(z)

        raw = invert_standardizer(done, params)
        values = np.where(m.observed, m.values, raw.values)
        completed = m.completed(values)
        md = self._metadata(**extra)

        output_path = None
        if write:
            output_path = str(write_csv(completed, self._output_path(f"{method}.csv"), md))
            logger.info(f"Completed dataset written to {output_path}")
        return ImputeResult(
            method=method,
            output_path=output_path,
            n_imputed=int((~m.observed).sum()),
            completed_csv=to_csv_text(completed, md),
            self_mask_rate=self_rate,
            n_training_cells=n_training,
            meta_weights=weights,
            config_hash=self.config_hash,
            total_time_ms=_elapsed_ms(start_time),
        )

    # -- benchmark ------------------------------------------------------------

    def benchmark(self, data: Optional[DataMatrix] = None, write: bool = True) -> BenchmarkResult:
        start_time = time.time()
        bench_cfg = self.config.benchmark_config()
        if data is None:
            data = self.load_data(require_target=bench_cfg.evaluate_downstream)
        elif bench_cfg.evaluate_downstream and data.target_col is None:
            raise ConfigError("a target column is required for downstream evaluation")

        report = run_benchmark(data, bench_cfg)
        summary = render_summary(report)
        report_path = summary_path = None
        if write:
            report_path = str(write_report(report, self._output_path("report.csv")))
            summary_path = self._output_path("summary.md")
            summary_path.write_text(summary, encoding="utf-8")
            summary_path = str(summary_path)
        return BenchmarkResult(
            report_path=report_path,
            summary_path=summary_path,
            summary=summary,
            aggregate=report.aggregate,
            dominance_violations=report.metadata.dominance_violations,
            config_hash=self.config_hash,
            total_time_ms=_elapsed_ms(start_time),
        )

    # -- report ---------------------------------------------------------------

    def render_report(self, report_path: str) -> ReportResult:
        start_time = time.time()
        summary = render_summary(read_report(report_path))
        return ReportResult(summary=summary, total_time_ms=_elapsed_ms(start_time))
