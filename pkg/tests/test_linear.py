import numpy as np
import pytest

from app.core.errors import DataError, DimensionMismatchError
from app.core.linear import normal_equation_residual, solve_ridge
from app.core.rng import make_rng


def _gradient_descent(X, y, epsilon, steps=10000):
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    G = A.T @ A + epsilon * np.eye(A.shape[1])
    b = A.T @ y
    step = 1.0 / np.linalg.eigvalsh(G).max()
    w = np.zeros(A.shape[1])
    for _ in range(steps):
        w -= step * (G @ w - b)
    return w


class TestSolveRidge:
    def test_exact_line(self):
        X = np.arange(10.0)[:, None]
        sol = solve_ridge(X, 3.0 * X[:, 0] - 2.0, epsilon=0.0)
        np.testing.assert_allclose(sol.weights, [3.0], atol=1e-10)
        assert sol.intercept == pytest.approx(-2.0, abs=1e-10)

    def test_matches_gradient_descent(self):
        rng = make_rng(17)
        for _ in range(20):
            n, p = int(rng.integers(50, 101)), int(rng.integers(1, 10))
            X, y = rng.normal(size=(n, p)), rng.normal(size=n)
            sol = solve_ridge(X, y, epsilon=0.5)
            expected = _gradient_descent(X, y, 0.5)
            np.testing.assert_allclose(np.append(sol.weights, sol.intercept), expected, atol=1e-4)

    def test_normal_equation_residual(self):
        rng = make_rng(18)
        for _ in range(20):
            n, p = int(rng.integers(10, 200)), int(rng.integers(1, 30))
            X, y = rng.normal(size=(n, p)), rng.normal(size=n)
            sol = solve_ridge(X, y, epsilon=1e-6)
            assert normal_equation_residual(X, y, sol) < 1e-8

    def test_collinear_columns_with_ridge(self):
        rng = make_rng(19)
        x = rng.normal(size=40)
        X = np.column_stack([x, x, np.ones(40)])
        sol = solve_ridge(X, 2 * x + 1, epsilon=1e-6)
        np.testing.assert_allclose(sol.predict(X), 2 * x + 1, atol=1e-4)
        assert np.isfinite(sol.weights).all()

    def test_input_errors(self):
        with pytest.raises(DataError):
            solve_ridge(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(DataError):
            solve_ridge(np.array([[np.nan]]), np.zeros(1))
        with pytest.raises(DataError):
            solve_ridge(np.ones((3, 1)), np.zeros(3), epsilon=-1.0)
        with pytest.raises(DimensionMismatchError):
            solve_ridge(np.ones((3, 1)), np.zeros(4))

    def test_predict_width(self):
        sol = solve_ridge(np.ones((3, 2)), np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            sol.predict(np.ones((2, 3)))
