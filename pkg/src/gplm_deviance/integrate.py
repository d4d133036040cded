"""
Global quantities assembled from a grid of local fits.

Integrals over the covariate support are trapezoid sums over the grid of a
:class:`SmoothConfig`. The smoother trace is evaluated point by point from
``(p+1) x (p+1)`` systems; the ``n x n`` smoothing matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CurveError, UnderdeterminedWindow
from .family import Family
from .kernel_grid import (
    BoundaryWeights,
    SmoothConfig,
    boundary_factors,
    integrate_over_grid,
    kernel_matrix,
)
from .local_fit import (
    Dataset,
    GridFit,
    LocalFit,
    _hankel,
    _moments,
    fit_points,
    grid_deviances,
)

__all__ = [
    "CurveFit",
    "fit_curve",
    "theta_star",
    "integrated_likelihood",
    "smoother_df",
    "trace_integrand",
]


@dataclass(frozen=True)
class CurveFit:
    """Grid of local fits plus the integrated quantities built from them."""

    cfg: SmoothConfig
    family: Family
    bw: BoundaryWeights
    x: np.ndarray
    fits: GridFit
    offset: np.ndarray
    theta_star: np.ndarray
    mu_star: np.ndarray
    int_loglik: float
    int_d_null: float
    int_d_resid: float
    int_d_model: float
    local_d_null: np.ndarray
    local_d_resid: np.ndarray
    local_d_model: np.ndarray
    df: float

    @property
    def locals(self) -> list[LocalFit]:
        return [self.fits[g] for g in range(len(self.fits))]

    @property
    def m_star(self) -> np.ndarray:
        """Integrated local polynomial part, ``theta_star`` minus offsets."""
        return self.theta_star - self.offset

    @property
    def n_separated(self) -> int:
        return int(self.fits.separated.sum())

    @property
    def converged(self) -> bool:
        return bool(np.all(self.fits.converged | self.fits.separated))


def theta_star(fits: GridFit, cfg: SmoothConfig) -> np.ndarray:
    """``theta*_i = int theta_i(x) c_i K_h(x_i - x) dx`` by the trapezoid rule."""
    return cfg.trapezoid @ (fits.theta * fits.weights)


def integrated_likelihood(fits: GridFit, cfg: SmoothConfig) -> float:
    """``int l_x(y; theta_x) dx``, including the ``c(y, phi)`` terms."""
    return integrate_over_grid(fits.loglik, cfg)


def trace_integrand(x, cfg: SmoothConfig, weights: np.ndarray) -> np.ndarray:
    """``tr[(X'WX)^{-1} X'W^2 X]`` at every grid point for a ``(G, n)`` weight array."""
    x = np.asarray(x, dtype=float)
    q = cfg.degree + 1
    d = x[None, :] - cfg.grid[:, None]
    a = _hankel(_moments(d, weights, 2 * q - 2), q)
    b = _hankel(_moments(d, weights * weights, 2 * q - 2), q)
    bad = ~(np.linalg.cond(a) < 1e14)
    if np.any(bad):
        g = int(np.flatnonzero(bad)[0])
        count = int((weights[g] > 0).sum())
        raise UnderdeterminedWindow(cfg.grid[g], count, q)
    return np.trace(np.linalg.solve(a, b), axis1=1, axis2=2)


def smoother_df(x, cfg: SmoothConfig, bw: BoundaryWeights | None = None) -> float:
    """``tr(H_p*)``, the response-free trace of the integrated smoother."""
    x = np.asarray(x, dtype=float)
    if bw is None:
        bw = boundary_factors(x, cfg)
    return integrate_over_grid(trace_integrand(x, cfg, kernel_matrix(x, cfg, bw)), cfg)


def fit_curve(
    data: Dataset,
    family: Family,
    cfg: SmoothConfig,
    bw: BoundaryWeights | None = None,
    offset=None,
    start=None,
    df: float | None = None,
) -> CurveFit:
    """Fit local polynomials on the whole grid and integrate.

    Raises
    ------
    CurveError
        A grid point has an underdetermined window.
    """
    family.check_response(data.y)
    if bw is None:
        bw = boundary_factors(data.x, cfg)
    offset = np.zeros(data.n) if offset is None else np.asarray(offset, dtype=float)
    try:
        fits = fit_points(cfg.grid, data, family, cfg, bw, offset, start)
        if df is None:
            df = smoother_df(data.x, cfg, bw)
    except UnderdeterminedWindow as exc:
        raise CurveError(str(exc)) from exc
    ts = theta_star(fits, cfg)
    d_null, d_resid, d_model = grid_deviances(fits, data, family)
    return CurveFit(
        cfg=cfg,
        family=family,
        bw=bw,
        x=data.x,
        fits=fits,
        offset=offset,
        theta_star=ts,
        mu_star=family.mean(ts),
        int_loglik=integrated_likelihood(fits, cfg),
        int_d_null=integrate_over_grid(d_null, cfg),
        int_d_resid=integrate_over_grid(d_resid, cfg),
        int_d_model=integrate_over_grid(d_model, cfg),
        local_d_null=d_null,
        local_d_resid=d_resid,
        local_d_model=d_model,
        df=float(df),
    )
