"""Parametric canonical-link GLM by Fisher scoring, with an optional offset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DesignError, NumericalError
from .family import Family

__all__ = ["GlmResult", "glm_fit"]


@dataclass(frozen=True)
class GlmResult:
    coef: np.ndarray
    theta: np.ndarray
    loglik: float
    converged: bool
    iterations: int


def glm_fit(X, y, family: Family, offset=None, max_iter: int = 100, tol: float = 1e-12) -> GlmResult:
    """Maximise ``sum_i l(y_i; offset_i + X_i' coef)``.

    Raises
    ------
    DesignError
        ``X`` is rank deficient.
    NumericalError
        The iteration did not converge.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, k = X.shape
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if k and np.linalg.matrix_rank(X) < k:
        raise DesignError("design matrix is rank deficient")
    phi = family.dispersion

    def objective(theta):
        return float(np.sum(y * theta - family.b(theta)) / phi)

    coef = np.zeros(k)
    if k and np.allclose(X[:, 0], 1.0):
        ybar = y.mean()
        if family.name == "bernoulli-logit":
            ybar = np.clip(ybar, 1e-3, 1 - 1e-3)
        elif family.name == "poisson-log":
            ybar = max(ybar, 1e-3)
        coef[0] = float(family.link(ybar)) - offset.mean()
    theta = offset + X @ coef
    obj = objective(theta)
    converged = k == 0
    it = 0
    for it in range(1, max_iter + 1):
        if k == 0:
            break
        mu = family.mean(theta)
        v = family.variance(theta)
        step = np.linalg.solve((X * v[:, None]).T @ X, X.T @ (y - mu))
        t = 1.0
        for _ in range(30):
            new_theta = offset + X @ (coef + t * step)
            new_obj = objective(new_theta)
            if new_obj >= obj - 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            converged = True
            break
        coef = coef + t * step
        change = abs(new_obj - obj)
        theta, obj = new_theta, new_obj
        if change <= tol * (abs(obj) + tol) and np.max(np.abs(t * step)) < 1e-6:
            converged = True
            break
    if not converged:
        raise NumericalError(f"GLM did not converge in {max_iter} iterations")
    loglik = float(np.sum(family.loglik(y, theta)))
    return GlmResult(coef=coef, theta=theta, loglik=loglik, converged=converged, iterations=it)
