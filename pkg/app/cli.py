# FILE 15: cli.py
# Purpose: Command-line entry point: mask, impute, benchmark and report subcommands.
# Dependencies: argparse, pipeline.py

import argparse
import logging
import sys
from typing import Any, Dict, List, Optional

from app.core.config import MIB_LOG_LEVEL, load_config_file, merge_config
from app.core.errors import MetaImputeError
from app.core.meta_imputer import valid_imputer_names
from app.core.pipeline import ImputationPipeline

logger = logging.getLogger("app.cli")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--data", help="input CSV (header row, empty field = missing)")
    p.add_argument("--target", help="name of the target column")
    p.add_argument("--rate", type=float, help="MCAR masking rate in [0, 1]")
    p.add_argument("--folds", type=int, help="cross-validation folds (>= 2)")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--imputers", help=f"comma list from: {','.join(valid_imputer_names())}")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="key=value config file; its values override flags")
    p.add_argument("--fj-mode", choices=["one-hot", "one-hot+stats"], help="column features in the meta design")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meta-impute",
        description="Missing-data imputation with a stacked linear meta-imputer, plus a CV benchmark harness.",
    )
    parser.add_argument("--log-level", default=MIB_LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mask = sub.add_parser("mask", help="hide a random fraction of cells and write the mask sidecar")
    _add_run_flags(p_mask)

    p_impute = sub.add_parser("impute", help="complete a dataset with one imputer")
    _add_run_flags(p_impute)
    p_impute.add_argument("--method", required=True, help="imputer name, or 'mib'")
    p_impute.add_argument("--mask-file", help="mask sidecar whose hidden truths train the MIB meta-model")

    p_bench = sub.add_parser("benchmark", help="run the k-fold direct + indirect benchmark")
    _add_run_flags(p_bench)

    p_report = sub.add_parser("report", help="print the summary table of a report CSV")
    p_report.add_argument("report", help="report CSV written by 'benchmark'")
    return parser


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    imputers: Optional[List[str]] = None
    if getattr(args, "imputers", None):
        imputers = [n.strip().lower() for n in args.imputers.split(",") if n.strip()]
    return {
        "data_path": getattr(args, "data", None),
        "target_name": getattr(args, "target", None),
        "missing_rate": getattr(args, "rate", None),
        "folds": getattr(args, "folds", None),
        "seed": getattr(args, "seed", None),
        "imputers": imputers,
        "output_dir": getattr(args, "out", None),
        "fj_mode": getattr(args, "fj_mode", None),
    }


def cmd_mask(pipeline: ImputationPipeline) -> int:
    result = pipeline.mask()
    print(f"Hidden cells: {result.n_hidden}")
    print(f"Masked data:  {result.masked_path}")
    print(f"Mask sidecar: {result.mask_path}")
    return 0


def cmd_impute(pipeline: ImputationPipeline, method: str, mask_file: Optional[str] = None) -> int:
    result = pipeline.impute(method, mask_file=mask_file)
    print(f"Imputed {result.n_imputed} cells with {result.method} -> {result.output_path}")
    if result.meta_weights:
        for name, weight in result.meta_weights.items():
            print(f"  {name:<22} {weight:+.4f}")
    return 0


def cmd_benchmark(pipeline: ImputationPipeline) -> int:
    result = pipeline.benchmark()
    print(result.summary, end="")
    print(f"\nReport:  {result.report_path}\nSummary: {result.summary_path}")
    return 0


def cmd_report(pipeline: ImputationPipeline, report_path: str) -> int:
    print(pipeline.render_report(report_path).summary, end="")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        file_values = load_config_file(args.config) if getattr(args, "config", None) else None
        config = merge_config(_flags(args), file_values)
        pipeline = ImputationPipeline(config)
        if args.command == "mask":
            return cmd_mask(pipeline)
        if args.command == "impute":
            return cmd_impute(pipeline, args.method, args.mask_file)
        if args.command == "benchmark":
            return cmd_benchmark(pipeline)
        return cmd_report(pipeline, args.report)
    except MetaImputeError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
