import os
import sys
from pathlib import Path

from dotenv import load_dotenv

# Add project root to python path
sys.path.append(str(Path(__file__).resolve().parent.parent))

from app.core.data_matrix import write_csv
from app.core.synthetic import (
    duplicate_column_matrix,
    linear_target_matrix,
    low_rank_matrix,
    noise_target_matrix,
    random_matrix,
    routing_matrix,
)

env_path = Path(__file__).resolve().parent.parent / '.env'
load_dotenv(dotenv_path=env_path)

# Configuration
MIB_SEED = int(os.getenv("MIB_SEED", "42"))
DATA_DIR = Path(os.getenv("MIB_DATA_DIR", Path(__file__).resolve().parent / "synthetic"))


def datasets(seed: int):
    """(file name, matrix) pairs written by this script."""
    return [
        ("routing.csv", routing_matrix(200, seed, source_missing=0.02)),
        ("low_rank.csv", low_rank_matrix(100, 8, 2, seed, noise=0.05)),
        ("duplicate_column.csv", duplicate_column_matrix(200, 5, seed)),
        ("linear_target.csv", linear_target_matrix(300, 6, seed)),
        ("noise_target.csv", noise_target_matrix(500, 5, seed)),
        ("correlated.csv", random_matrix(250, 8, seed, source_missing=0.05)),
    ]


def main():
    print("========================================")
    print("SYNTHETIC DATA GENERATION")
    print("========================================")
    print(f"Seed: {MIB_SEED}")
    print(f"Output: {DATA_DIR}")
    print()
    for name, m in datasets(MIB_SEED):
        path = write_csv(m, DATA_DIR / name, {"generator": Path(name).stem, "seed": MIB_SEED})
        missing = int((~m.observed).sum())
        target = m.column_names[m.target_col] if m.target_col is not None else "-"
        print(f"    {name:<22}: {m.n_rows:>4} rows x {m.n_cols:>2} cols, {missing:>4} missing, target={target} ✓")
        print(f"        -> {path}")
    print()
    print("Done.")


if __name__ == "__main__":
    main()
