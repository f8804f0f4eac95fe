# FILE 3: masking.py
# Purpose: Seeded MCAR masking with retained ground truth, plus sidecar persistence.
# Dependencies: numpy

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.data_matrix import DataMatrix, format_metadata, parse_metadata
from app.core.errors import ConfigError, DataError
from app.core.rng import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Mask:
    """
    hidden[i, j] is True where a cell was artificially hidden.
    truth holds the hidden values at those cells and NaN elsewhere.
    """

    hidden: np.ndarray
    truth: np.ndarray
    seed: int
    rate: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.hidden.shape

    @property
    def n_hidden(self) -> int:
        return int(self.hidden.sum())

    def cells(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(rows, cols, truth) arrays in row-major order."""
        rows, cols = np.nonzero(self.hidden)
        return rows, cols, self.truth[rows, cols]


def apply_mcar_mask(m: DataMatrix, rate: float, seed: int, exclude_target: bool = True) -> Tuple[DataMatrix, Mask]:
    """
    Hides each maskable cell independently when its uniform draw is below `rate`.
    Maskable = observed, and outside the target column when exclude_target is set.
    One draw per maskable cell, consumed in row-major order.
    """
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"missing rate must be in [0, 1], got {rate}")

    maskable = m.observed.copy()
    if exclude_target and m.target_col is not None:
        maskable[:, m.target_col] = False

    rows, cols = np.nonzero(maskable)
    draws = make_rng(seed).random(rows.size)
    chosen = draws < rate

    hidden = np.zeros(m.shape, dtype=bool)
    hidden[rows[chosen], cols[chosen]] = True
    truth = np.where(hidden, m.values, np.nan)

    mask = Mask(hidden=hidden, truth=truth, seed=seed, rate=rate)
    logger.debug(f"MCAR mask: {mask.n_hidden} of {rows.size} maskable cells hidden (rate={rate}, seed={seed})")
    return m.with_values(m.values, m.observed & ~hidden), mask


def masked_positions(mask: Mask) -> List[Tuple[int, int, float]]:
    rows, cols, truth = mask.cells()
    return [(int(r), int(c), float(t)) for r, c, t in zip(rows, cols, truth)]


def empty_mask(shape: Tuple[int, int], seed: int = 0, rate: float = 0.0) -> Mask:
    return Mask(
        hidden=np.zeros(shape, dtype=bool),
        truth=np.full(shape, np.nan),
        seed=seed,
        rate=rate,
    )


def mask_from_positions(shape: Tuple[int, int], positions, seed: int, rate: float) -> Mask:
    hidden = np.zeros(shape, dtype=bool)
    truth = np.full(shape, np.nan)
    for r, c, t in positions:
        hidden[r, c] = True
        truth[r, c] = t
    return Mask(hidden=hidden, truth=truth, seed=seed, rate=rate)


def save_mask(mask: Mask, path, metadata: Optional[Dict[str, object]] = None) -> Path:
    """Sidecar CSV: one metadata comment line, header 'row,col,truth', one line per hidden cell."""
    header = {"seed": mask.seed, "rate": mask.rate, "shape": f"{mask.shape[0]}x{mask.shape[1]}"}
    header.update(metadata or {})
    lines = ["row,col,truth"]
    lines += [f"{r},{c},{format(t, '.17g')}" for r, c, t in masked_positions(mask)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_metadata(header) + "\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_mask(path) -> Mask:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DataError(f"could not read mask file {path}: {e}") from e

    meta: Dict[str, str] = {}
    while lines and lines[0].startswith("#"):
        meta.update(parse_metadata(lines.pop(0)))
    if not lines or lines[0].strip() != "row,col,truth":
        raise DataError(f"{path}: expected header 'row,col,truth'")
    try:
        n, d = (int(x) for x in meta["shape"].split("x"))
        seed, rate = int(meta["seed"]), float(meta["rate"])
        positions = []
        for line in lines[1:]:
            if not line.strip():
                continue
            r, c, t = line.split(",")
            positions.append((int(r), int(c), float(t)))
    except (KeyError, ValueError) as e:
        raise DataError(f"{path}: malformed mask sidecar: {e}") from e
    return mask_from_positions((n, d), positions, seed=seed, rate=rate)
