# FILE 11: report.py
# Purpose: Benchmark report persistence (CSV with a metadata comment line) and the
#          Markdown summary table (Masked MAE, Masked RMSE, three prediction RMSEs).
# Dependencies: pandas, evaluation.py

import io
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from app.core.base_imputers import LABELS
from app.core.data_matrix import format_metadata, parse_metadata
from app.core.errors import DataError
from app.core.evaluation import (
    AggregateRow,
    BenchmarkReport,
    DirectScores,
    FoldResult,
    IndirectScores,
    RunMetadata,
)
from app.core.meta_imputer import MIB_LABEL

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "imputer", "fold", "masked_mae", "masked_rmse", "n_cells", "train_masked_rmse",
    "pred_rmse_rf", "pred_rmse_gbt", "pred_rmse_lr", "meta_weights",
]
SUMMARY_COLUMNS = [
    ("Masked MAE", "masked_mae"),
    ("Masked RMSE", "masked_rmse"),
    ("Prediction RMSE (RF)", "pred_rmse_rf"),
    ("Prediction RMSE (XGB-style)", "pred_rmse_gbt"),
    ("Prediction RMSE (LR)", "pred_rmse_lr"),
]
VIOLATION_PREFIX = "# dominance_violation: "
AGGREGATE_FOLD = "mean"


def _encode_weights(weights: Optional[Dict[str, float]]) -> str:
    if not weights:
        return ""
    return ";".join(f"{k}:{format(v, '.17g')}" for k, v in weights.items())


def _decode_weights(text) -> Optional[Dict[str, float]]:
    if not isinstance(text, str) or not text:
        return None
    out = {}
    for item in text.split(";"):
        key, value = item.rsplit(":", 1)
        out[key] = float(value)
    return out


def _fold_record(r: FoldResult) -> dict:
    ind = r.indirect
    return {
        "imputer": r.imputer,
        "fold": str(r.fold),
        "masked_mae": r.direct.masked_mae,
        "masked_rmse": r.direct.masked_rmse,
        "n_cells": r.direct.n_cells,
        "train_masked_rmse": r.train_masked_rmse,
        "pred_rmse_rf": ind.pred_rmse_rf if ind else np.nan,
        "pred_rmse_gbt": ind.pred_rmse_gbt if ind else np.nan,
        "pred_rmse_lr": ind.pred_rmse_lr if ind else np.nan,
        "meta_weights": _encode_weights(r.meta_weights),
    }


def _aggregate_record(a: AggregateRow) -> dict:
    return {
        "imputer": a.imputer,
        "fold": AGGREGATE_FOLD,
        "masked_mae": a.masked_mae,
        "masked_rmse": a.masked_rmse,
        "n_cells": a.n_cells,
        "train_masked_rmse": a.train_masked_rmse,
        "pred_rmse_rf": np.nan if a.pred_rmse_rf is None else a.pred_rmse_rf,
        "pred_rmse_gbt": np.nan if a.pred_rmse_gbt is None else a.pred_rmse_gbt,
        "pred_rmse_lr": np.nan if a.pred_rmse_lr is None else a.pred_rmse_lr,
        "meta_weights": _encode_weights(a.meta_weights),
    }


def report_to_csv_text(report: BenchmarkReport) -> str:
    """One row per imputer x fold, then one aggregate row per imputer (fold = 'mean')."""
    md = report.metadata
    header = format_metadata({
        "seed": md.seed,
        "rate": md.rate,
        "folds": md.folds,
        "dataset": md.dataset or "-",
        "target": md.target or "-",
        "config_hash": md.config_hash or "-",
        "ridge_epsilon": md.ridge_epsilon,
        "fj_mode": md.fj_mode,
    })
    header += "".join(f"{VIOLATION_PREFIX}{v}\n" for v in md.dominance_violations)
    records = [_fold_record(r) for r in report.folds] + [_aggregate_record(a) for a in report.aggregate]
    frame = pd.DataFrame.from_records(records, columns=CSV_COLUMNS)
    return header + frame.to_csv(index=False, float_format="%.17g", na_rep="", lineterminator="\n")


def write_report(report: BenchmarkReport, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_to_csv_text(report), encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path


def _opt(value) -> Optional[float]:
    return None if pd.isna(value) else float(value)


def parse_report(text: str, source: str = "<report>") -> BenchmarkReport:
    lines = text.splitlines()
    meta: Dict[str, str] = {}
    violations: List[str] = []
    while lines and lines[0].startswith("#"):
        line = lines.pop(0)
        if line.startswith(VIOLATION_PREFIX):
            violations.append(line[len(VIOLATION_PREFIX):])
        else:
            meta.update(parse_metadata(line))
    try:
        frame = pd.read_csv(io.StringIO("\n".join(lines)), dtype={"fold": str, "imputer": str, "meta_weights": str},
                            keep_default_na=False, na_values={c: [""] for c in CSV_COLUMNS[2:9]},
                            float_precision="round_trip")
        missing = [c for c in CSV_COLUMNS if c not in frame.columns]
        if missing:
            raise DataError(f"{source}: report is missing columns {missing}")

        def unset(v):
            return "" if v == "-" else v

        metadata = RunMetadata(
            seed=int(meta["seed"]),
            rate=float(meta["rate"]),
            folds=int(meta["folds"]),
            dataset=unset(meta.get("dataset", "")),
            target=unset(meta.get("target", "")),
            config_hash=unset(meta.get("config_hash", "")),
            ridge_epsilon=float(meta.get("ridge_epsilon", 1e-6)),
            fj_mode=meta.get("fj_mode", "one-hot"),
            dominance_violations=violations,
        )
        folds, aggregate = [], []
        for rec in frame.to_dict(orient="records"):
            has_indirect = not pd.isna(rec["pred_rmse_rf"])
            if rec["fold"] == AGGREGATE_FOLD:
                aggregate.append(AggregateRow(
                    imputer=rec["imputer"],
                    n_folds=metadata.folds,
                    masked_mae=float(rec["masked_mae"]),
                    masked_rmse=float(rec["masked_rmse"]),
                    n_cells=int(rec["n_cells"]),
                    train_masked_rmse=float(rec["train_masked_rmse"]),
                    pred_rmse_rf=_opt(rec["pred_rmse_rf"]),
                    pred_rmse_gbt=_opt(rec["pred_rmse_gbt"]),
                    pred_rmse_lr=_opt(rec["pred_rmse_lr"]),
                    meta_weights=_decode_weights(rec["meta_weights"]),
                ))
                continue
            folds.append(FoldResult(
                imputer=rec["imputer"],
                fold=int(rec["fold"]),
                direct=DirectScores(masked_mae=float(rec["masked_mae"]), masked_rmse=float(rec["masked_rmse"]),
                                    n_cells=int(rec["n_cells"])),
                train_masked_rmse=float(rec["train_masked_rmse"]),
                indirect=IndirectScores(
                    pred_rmse_rf=float(rec["pred_rmse_rf"]),
                    pred_rmse_gbt=float(rec["pred_rmse_gbt"]),
                    pred_rmse_lr=float(rec["pred_rmse_lr"]),
                ) if has_indirect else None,
                meta_weights=_decode_weights(rec["meta_weights"]),
            ))
    except (KeyError, ValueError, pd.errors.ParserError) as e:
        raise DataError(f"{source}: malformed report: {e}") from e
    return BenchmarkReport(metadata=metadata, folds=folds, aggregate=aggregate)


def read_report(path) -> BenchmarkReport:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"could not read report {path}: {e}") from e
    return parse_report(text, source=str(path))


def _table_rank(name: str) -> int:
    order = list(LABELS.values()) + [MIB_LABEL]
    base = name.split(" #")[0]
    return order.index(base) if base in order else len(order)


def _markdown(columns: List[str], rows: List[List[str]]) -> List[str]:
    widths = [len(c) for c in columns]
    for row in rows:
        for i, val in enumerate(row):
            widths[i] = max(widths[i], len(val))
    lines = ["| " + " | ".join(f"{c:<{w}}" for c, w in zip(columns, widths)) + " |"]
    lines.append("| " + " | ".join("-" * w for w in widths) + " |")
    for row in rows:
        lines.append("| " + " | ".join(f"{v:<{w}}" for v, w in zip(row, widths)) + " |")
    return lines


def render_summary(report: BenchmarkReport, digits: int = 3) -> str:
    """Aggregate table in result-table order; the best (lowest) value per column is marked '*'."""
    rows = sorted(report.aggregate, key=lambda a: _table_rank(a.imputer))
    best = {}
    for _, attr in SUMMARY_COLUMNS:
        vals = [getattr(a, attr) for a in rows if getattr(a, attr) is not None]
        best[attr] = round(min(vals), digits) if vals else None

    cells = []
    for a in rows:
        line = [a.imputer]
        for _, attr in SUMMARY_COLUMNS:
            v = getattr(a, attr)
            if v is None:
                line.append("-")
            else:
                mark = "*" if round(v, digits) == best[attr] else ""
                line.append(f"{v:.{digits}f}{mark}")
        cells.append(line)

    md = report.metadata
    out = [
        f"Benchmark summary: {md.folds}-fold CV, rate={md.rate}, seed={md.seed}, "
        f"config_hash={md.config_hash or '-'}",
        "",
    ]
    out += _markdown(["Imputer"] + [label for label, _ in SUMMARY_COLUMNS], cells)

    mib = [a for a in rows if a.imputer == MIB_LABEL and a.meta_weights]
    if mib:
        out += ["", "MIB mean meta-model weights:", ""]
        out += _markdown(["Base imputer", "Weight"], [[k, f"{v:.4f}"] for k, v in mib[0].meta_weights.items()])
    if md.dominance_violations:
        out += ["", "Dominance bound violations:"] + [f"- {v}" for v in md.dominance_violations]
    return "\n".join(out) + "\n"
