# FILE 13: synthetic.py
# Purpose: Seeded synthetic datasets for tests, docs and the data seeding script.
# Dependencies: numpy

from typing import Optional

import numpy as np

from app.core.data_matrix import DataMatrix
from app.core.rng import derive_seed, make_rng


def _matrix(values: np.ndarray, target: bool, source_missing: float = 0.0, seed: int = 0) -> DataMatrix:
    n, d = values.shape
    names = [f"x{j}" for j in range(d - 1)] + (["y"] if target else [f"x{d - 1}"])
    observed = np.ones((n, d), dtype=bool)
    if source_missing > 0:
        observed = make_rng(derive_seed(seed, "source-missing")).random((n, d)) >= source_missing
        if target:
            observed[:, -1] = True
    return DataMatrix(values=values, observed=observed, column_names=tuple(names),
                      target_col=d - 1 if target else None)


def random_matrix(n: int, d: int, seed: int, source_missing: float = 0.0, target: bool = True) -> DataMatrix:
    """Correlated Gaussian columns (random mixing of independent normals)."""
    rng = make_rng(seed)
    mixing = rng.normal(size=(d, d))
    values = rng.normal(size=(n, d)) @ mixing
    return _matrix(values, target, source_missing, seed)


def low_rank_matrix(n: int, d: int, rank: int, seed: int, noise: float = 0.0) -> DataMatrix:
    rng = make_rng(seed)
    values = rng.normal(size=(n, rank)) @ rng.normal(size=(rank, d))
    if noise > 0:
        values = values + noise * rng.normal(size=(n, d))
    return _matrix(values, target=False)


def duplicate_column_matrix(n: int, d: int, seed: int) -> DataMatrix:
    """Column 1 is an exact copy of column 0; the rest are independent."""
    rng = make_rng(seed)
    values = rng.normal(size=(n, d))
    values[:, 1] = values[:, 0]
    return _matrix(values, target=False)


def linear_target_matrix(n: int, d: int, seed: int, noise: float = 0.0) -> DataMatrix:
    """Last column y = X beta + c (+ noise)."""
    rng = make_rng(seed)
    X = rng.normal(size=(n, d - 1))
    beta = rng.normal(size=d - 1)
    y = X @ beta + 0.5
    if noise > 0:
        y = y + noise * rng.normal(size=n)
    return _matrix(np.column_stack([X, y]), target=True)


def noise_target_matrix(n: int, d: int, seed: int) -> DataMatrix:
    """Target is standard-normal noise independent of the features."""
    rng = make_rng(seed)
    return _matrix(rng.normal(size=(n, d)), target=True)


def routing_matrix(n: int, seed: int, source_missing: Optional[float] = None) -> DataMatrix:
    """
    Six columns where different imputers win on different columns:
    x0, x1 are independent noise (column statistics are optimal);
    x2, x3 are near-copies of x4 (neighbour and tree imputers recover them);
    y is a noisy linear target.
    """
    rng = make_rng(seed)
    x0, x1, x4 = rng.normal(size=(3, n))
    x2 = x4 + 0.05 * rng.normal(size=n)
    x3 = -x4 + 0.05 * rng.normal(size=n)
    y = x0 + x4 + 0.1 * rng.normal(size=n)
    return _matrix(np.column_stack([x0, x1, x2, x3, x4, y]), target=True,
                   source_missing=source_missing or 0.0, seed=seed)
