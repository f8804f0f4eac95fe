import os
import sys

import numpy as np
import pytest

# Ensure the project root is importable when pytest runs from anywhere
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.data_matrix import DataMatrix  # noqa: E402


def build_matrix(rows, names=None, target=None) -> DataMatrix:
    """Rows of floats, None marks a missing cell."""
    values = np.array([[np.nan if v is None else float(v) for v in row] for row in rows])
    observed = ~np.isnan(values)
    names = names or [f"c{j}" for j in range(values.shape[1])]
    target_col = names.index(target) if target is not None else None
    return DataMatrix(values=values, observed=observed, column_names=tuple(names), target_col=target_col)


@pytest.fixture
def make_matrix():
    return build_matrix


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("a,b,c\n1,2,3\n3,,5\n5,6,\n7,8,9\n", encoding="utf-8")
    return path
