# FILE 7: linear.py
# Purpose: Ridge least squares via the normal equations, shared by the meta-model
#          and the downstream linear-regression evaluator.
# Dependencies: numpy, scipy

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lstsq

from app.core.errors import DataError, DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RidgeSolution:
    weights: np.ndarray
    intercept: float
    epsilon: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.weights):
            raise DimensionMismatchError(f"linear model takes {len(self.weights)} features, got shape {X.shape}")
        return X @ self.weights + self.intercept


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _normal_system(X: np.ndarray, y: np.ndarray, epsilon: float):
    A = _augment(X)
    gram = A.T @ A + epsilon * np.eye(A.shape[1])
    return gram, A.T @ y


def solve_ridge(X, y, epsilon: float = 1e-6) -> RidgeSolution:
    """
    Solves (A'A + eps I) w = A'y with A = [X, 1]; eps also penalizes the intercept.
    eps > 0: Cholesky plus one step of iterative refinement.
    eps = 0: minimum-norm least squares.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatchError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] == 0:
        raise DataError("least squares needs at least one row")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("least-squares inputs must be finite")
    if epsilon < 0:
        raise DataError(f"ridge epsilon must be >= 0, got {epsilon}")

    if epsilon == 0.0:
        coef = lstsq(_augment(X), y)[0]
    else:
        gram, rhs = _normal_system(X, y, epsilon)
        try:
            factor = cho_factor(gram)
            coef = cho_solve(factor, rhs)
            coef = coef + cho_solve(factor, rhs - gram @ coef)
        except LinAlgError:
            logger.warning("Cholesky failed on the ridge system; falling back to least squares")
            coef = lstsq(gram, rhs)[0]
    return RidgeSolution(weights=coef[:-1], intercept=float(coef[-1]), epsilon=epsilon)


def normal_equation_residual(X, y, solution: RidgeSolution) -> float:
    """||G w - b|| / (||G|| ||w|| + ||b||) for the system solve_ridge solved."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    gram, rhs = _normal_system(X, y, solution.epsilon)
    coef = np.append(solution.weights, solution.intercept)
    scale = np.linalg.norm(gram) * np.linalg.norm(coef) + np.linalg.norm(rhs)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(gram @ coef - rhs) / scale)
