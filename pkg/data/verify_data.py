import argparse
import sys
from pathlib import Path
from typing import Optional

import numpy as np

# Add project root to python path
sys.path.append(str(Path(__file__).resolve().parent.parent))

from app.core.data_matrix import DataMatrix, load_csv
from app.core.errors import MetaImputeError


def run_check(name: str, count: int, expected: int = 0) -> bool:
    ok = count == expected
    status = "PASS" if ok else f"FAIL (Got {count}, Expected {expected})"
    print(f"    [{status}] {name}")
    return ok


def verify(m: DataMatrix) -> bool:
    print("SHAPE:")
    print(f"    rows    : {m.n_rows:>6}")
    print(f"    columns : {m.n_cols:>6}")
    if m.target_col is not None:
        print(f"    target  : {m.column_names[m.target_col]}")
    print()

    print("MISSING CELLS PER COLUMN:")
    missing = (~m.observed).sum(axis=0)
    for name, count in zip(m.column_names, missing):
        print(f"    {name:<20}: {count:>6} ({count / m.n_rows:6.1%})")
    print()

    print("DATA QUALITY:")
    observed_counts = m.observed.sum(axis=0)
    constant = 0
    for j in range(m.n_cols):
        col = m.values[m.observed[:, j], j]
        if col.size and np.ptp(col) == 0:
            constant += 1
    checks = [
        run_check("At least 2 rows", int(m.n_rows < 2)),
        run_check("No fully missing columns", int((observed_counts == 0).sum())),
        run_check("No fully missing rows", int((~m.observed.any(axis=1)).sum())),
        run_check("No constant columns", constant),
    ]
    if m.target_col is not None:
        checks.append(run_check("No missing targets", int(missing[m.target_col])))
    return all(checks)


def main(argv: Optional[list] = None) -> int:
    parser = argparse.ArgumentParser(description="Data-quality report for an imputation input CSV.")
    parser.add_argument("path")
    parser.add_argument("--target")
    args = parser.parse_args(argv)

    print("========================================")
    print("DATA VERIFICATION REPORT")
    print("========================================")
    try:
        m = load_csv(args.path, args.target)
    except MetaImputeError as e:
        # non-numeric fields and malformed files surface here
        print(f"    [FAIL] Parse: {e}")
        return e.exit_code
    print("    [PASS] Parse: all fields numeric or empty")
    print()
    ok = verify(m)
    print()
    print("RESULT:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
