"""
Local polynomial likelihood by Fisher scoring.

At a point ``x`` the canonical parameter of observation ``i`` is approximated
by ``offset_i + sum_j beta_j (x_i - x)^j`` and ``beta`` maximises the
kernel-weighted log-likelihood. Fits at many points are computed together:
every array below carries the grid on its leading axis, so a sweep over the
grid is a handful of vectorised numpy operations with a fixed reduction
order, hence reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DegenerateNull, UnderdeterminedWindow
from .family import THETA_MAX, Family
from .kernel_grid import BoundaryWeights, SmoothConfig, boundary_factors, kernel_weight

__all__ = [
    "Dataset",
    "LocalFit",
    "GridFit",
    "LocalDeviances",
    "fit_local",
    "fit_points",
    "local_theta",
    "local_deviances",
    "local_kl",
]

MAX_ITER = 100
REL_TOL = 1e-10
MAX_HALVINGS = 30
MIN_WEIGHT = 1e-12
_INIT_EPS = 1e-3


@dataclass(frozen=True)
class Dataset:
    """Observations ``(x_i, z_i, y_i)``; ``z`` is ``None`` or an ``(n, K)`` array."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise ContractError("x and y lengths differ")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.ndim == 1:
                z = z[:, None]
            if z.shape[0] != x.shape[0]:
                raise ContractError("z rows do not match x")
            object.__setattr__(self, "z", z if z.shape[1] else None)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_linear(self) -> int:
        return 0 if self.z is None else self.z.shape[1]


@dataclass(frozen=True)
class LocalFit:
    x: float
    beta: np.ndarray
    fisher: np.ndarray
    converged: bool
    iterations: int
    separation_flag: bool


@dataclass(frozen=True)
class GridFit:
    """Local fits at several points, stacked along the leading axis."""

    points: np.ndarray        # (G,)
    beta: np.ndarray          # (G, p+1)
    fisher: np.ndarray        # (G, p+1, p+1)
    converged: np.ndarray     # (G,) bool
    iterations: np.ndarray    # (G,) int
    separated: np.ndarray     # (G,) bool
    weights: np.ndarray       # (G, n) corrected kernel weights c_i K_h(x_i - x_g)
    theta: np.ndarray         # (G, n) fitted canonical parameters incl. offsets
    loglik: np.ndarray        # (G,) local log-likelihood incl. c(y, phi)

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, g) -> LocalFit:
        return LocalFit(
            x=float(self.points[g]),
            beta=self.beta[g].copy(),
            fisher=self.fisher[g].copy(),
            converged=bool(self.converged[g]),
            iterations=int(self.iterations[g]),
            separation_flag=bool(self.separated[g]),
        )


class LocalDeviances(NamedTuple):
    d_null: float
    d_resid: float
    d_model: float


def _moments(d, w, top):
    # sums over observations of w * d**k for k = 0..top, shape (G, top+1)
    out = np.empty(w.shape[:1] + (top + 1,))
    term = w
    for k in range(top + 1):
        out[:, k] = term.sum(axis=1)
        if k < top:
            term = term * d
    return out


def _hankel(moments, q):
    idx = np.arange(q)
    return moments[:, idx[:, None] + idx[None, :]]


def _poly(beta, d):
    # Horner evaluation of sum_j beta_j d^j, beta (G, q), d (G, n)
    out = np.broadcast_to(beta[:, -1:], d.shape).copy()
    for j in range(beta.shape[1] - 2, -1, -1):
        out *= d
        out += beta[:, j : j + 1]
    return out


def _objective(family, y, theta, w):
    # kernel-weighted log-likelihood without c(y, phi)
    return ((y * theta - family.b(theta)) * w).sum(axis=1) / family.dispersion


def _start(family, y, offset, w, q):
    sw = w.sum(axis=1)
    ybar = (w @ y) / sw
    obar = (w @ offset) / sw
    if family.name == "bernoulli-logit":
        ybar = np.clip(ybar, _INIT_EPS, 1.0 - _INIT_EPS)
    elif family.name == "poisson-log":
        ybar = np.maximum(ybar, _INIT_EPS)
    beta = np.zeros((w.shape[0], q))
    beta[:, 0] = family.link(ybar) - obar
    return beta


def _separated_windows(family, y, active):
    """Windows whose responses pin the local MLE at infinity, with its sign."""
    G = active.shape[0]
    sign = np.zeros(G)
    if family.name == "bernoulli-logit":
        ones = (active & (y[None, :] == 1.0)).sum(axis=1)
        total = active.sum(axis=1)
        sign[ones == total] = 1.0
        sign[ones == 0] = -1.0
    elif family.name == "poisson-log":
        pos = (active & (y[None, :] > 0)).sum(axis=1)
        sign[pos == 0] = -1.0
    return sign


def fit_points(
    points,
    data: Dataset,
    family: Family,
    cfg: SmoothConfig,
    bw: BoundaryWeights | None = None,
    offset=None,
    start=None,
) -> GridFit:
    """Fit the local polynomial likelihood at each of ``points``.

    Parameters
    ----------
    points : array_like
        Locations ``x`` at which to fit.
    offset : array_like, optional
        Known per-observation offsets (``z_i' alpha`` for a partially linear
        model).
    start : ndarray, optional
        Warm-start coefficients of shape ``(len(points), p+1)``.

    Raises
    ------
    UnderdeterminedWindow
        Fewer than ``p+1`` observations carry positive weight at some point.
    """
    points = np.atleast_1d(np.asarray(points, dtype=float))
    x, y = data.x, data.y
    n = data.n
    q = cfg.degree + 1
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if bw is None:
        bw = boundary_factors(x, cfg)

    d = x[None, :] - points[:, None]
    w = kernel_weight(d / cfg.h) / cfg.h * bw.c[None, :]
    active = w > MIN_WEIGHT
    counts = active.sum(axis=1)
    short = np.flatnonzero(counts < q)
    if short.size:
        g = short[0]
        raise UnderdeterminedWindow(points[g], counts[g], q)
    # distinct design points also bound the rank of the local design
    for g in np.flatnonzero(counts < 4 * q):
        distinct = np.unique(x[active[g]]).size
        if distinct < q:
            raise UnderdeterminedWindow(points[g], distinct, q)

    G = points.shape[0]
    sep_sign = _separated_windows(family, y, active)
    separated = sep_sign != 0
    beta = _start(family, y, offset, w, q) if start is None else np.array(start, dtype=float)
    beta[separated] = 0.0
    beta[separated, 0] = sep_sign[separated] * THETA_MAX

    converged = separated.copy()
    iterations = np.zeros(G, dtype=int)
    todo = np.flatnonzero(~separated)
    if todo.size:
        dd, ww, oo = d[todo], w[todo], offset[None, :]
        b = beta[todo]
        theta = oo + _poly(b, dd)
        obj = _objective(family, y, theta, ww)
        live = np.arange(todo.size)
        conv = np.zeros(todo.size, dtype=bool)
        sep = np.zeros(todo.size, dtype=bool)
        its = np.zeros(todo.size, dtype=int)
        for it in range(1, MAX_ITER + 1):
            dl, wl, tl = dd[live], ww[live], theta[live]
            mu = family.mean(tl)
            v = family.variance(tl)
            score = _moments(dl, wl * (y[None, :] - mu), q - 1)
            info = _hankel(_moments(dl, wl * v, 2 * q - 2), q)
            try:
                step = np.linalg.solve(info, score[..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = _safe_solve(info, score)
            old = obj[live]
            scale = np.ones(live.size)
            newb = b[live] + step
            newt = oo + _poly(newb, dl)
            newobj = _objective(family, y, newt, wl)
            worse = ~(newobj >= old - 1e-12 * np.abs(old))
            halvings = 0
            while np.any(worse) and halvings < MAX_HALVINGS:
                halvings += 1
                scale[worse] *= 0.5
                k = np.flatnonzero(worse)
                newb[k] = b[live[k]] + scale[k, None] * step[k]
                newt[k] = oo + _poly(newb[k], dl[k])
                newobj[k] = _objective(family, y, newt[k], wl[k])
                worse[k] = ~(newobj[k] >= old[k] - 1e-12 * np.abs(old[k]))
            # a step that cannot be improved by halving leaves the fit where it is
            stuck = worse
            newb[stuck] = b[live[stuck]]
            newt[stuck] = tl[stuck]
            newobj[stuck] = old[stuck]

            b[live] = newb
            theta[live] = newt
            obj[live] = newobj
            its[live] = it
            change = np.abs(newobj - old)
            done = change <= REL_TOL * (np.abs(old) + REL_TOL)
            done |= stuck
            if family.bounded:
                blown = (np.abs(newt) * (wl > MIN_WEIGHT)).max(axis=1) > THETA_MAX
                sep[live[blown]] = True
                done |= blown
            conv[live[done]] = True
            live = live[~done]
            if live.size == 0:
                break
        beta[todo] = b
        converged[todo] = conv & ~sep
        separated[todo] = sep
        iterations[todo] = its

    theta = offset[None, :] + _poly(beta, d)
    v = family.variance(np.clip(theta, -THETA_MAX, THETA_MAX) if family.bounded else theta)
    fisher = _hankel(_moments(d, w * v, 2 * q - 2), q) / family.dispersion
    loglik = (family.loglik(y[None, :], theta) * w).sum(axis=1)
    return GridFit(
        points=points,
        beta=beta,
        fisher=fisher,
        converged=converged,
        iterations=iterations,
        separated=separated,
        weights=w,
        theta=theta,
        loglik=loglik,
    )


def _safe_solve(info, score):
    out = np.empty_like(score)
    for g in range(info.shape[0]):
        out[g] = np.linalg.lstsq(info[g], score[g], rcond=None)[0]
    return out


def fit_local(
    x: float,
    data: Dataset,
    family: Family,
    cfg: SmoothConfig,
    bw: BoundaryWeights | None = None,
    offset=None,
) -> LocalFit:
    """Maximise the local likelihood at a single point ``x``."""
    return fit_points([x], data, family, cfg, bw, offset)[0]


def local_theta(fit: LocalFit, xi):
    """Local polynomial ``sum_j beta_j (xi - x)^j`` (offset not included)."""
    xi = np.asarray(xi, dtype=float)
    d = xi - fit.x
    out = np.zeros_like(d)
    for coef in fit.beta[::-1]:
        out = out * d + coef
    return float(out) if out.ndim == 0 else out


def _null_theta(family: Family, y) -> float:
    ybar = float(np.mean(y))
    if not family.mean_in_range(ybar):
        raise DegenerateNull(f"sample mean {ybar} is on the boundary of the {family.name} mean range")
    return float(family.link(ybar))


def local_kl(family: Family, theta1, theta2, w):
    """Kernel-weighted divergence ``2 E_{mu1}[l(Y; theta1) - l(Y; theta2)]``.

    Arrays broadcast; the last axis runs over observations.
    """
    theta1 = np.asarray(theta1, dtype=float)
    theta2 = np.asarray(theta2, dtype=float)
    mu1 = family.mean(theta1)
    terms = mu1 * (theta1 - theta2) - family.b(theta1) + family.b(theta2)
    return 2.0 * (terms * w).sum(axis=-1) / family.dispersion


def grid_deviances(fits: GridFit, data: Dataset, family: Family):
    """Per-point ``(d_null, d_resid, d_model)`` arrays for a batch of fits."""
    y = data.y
    theta0 = _null_theta(family, y)
    w = fits.weights
    lsat = family.saturated_loglik(y)
    l0 = family.loglik(y, theta0)
    lfit = family.loglik(y[None, :], fits.theta)
    d_null = 2.0 * (w @ (lsat - l0))
    d_resid = 2.0 * ((lsat[None, :] - lfit) * w).sum(axis=1)
    d_model = 2.0 * ((lfit - l0[None, :]) * w).sum(axis=1)
    return d_null, d_resid, d_model


def local_deviances(
    fit: LocalFit,
    data: Dataset,
    family: Family,
    cfg: SmoothConfig,
    bw: BoundaryWeights | None = None,
    offset=None,
) -> LocalDeviances:
    """Local null, residual and model deviance at the fit's point.

    Raises
    ------
    DegenerateNull
        If the sample mean of ``y`` is on the boundary of the mean range.
    """
    if bw is None:
        bw = boundary_factors(data.x, cfg)
    d = data.x - fit.x
    w = kernel_weight(d / cfg.h) / cfg.h * bw.c
    theta = local_theta(fit, data.x)
    if offset is not None:
        theta = theta + np.asarray(offset, dtype=float)
    batch = GridFit(
        points=np.array([fit.x]),
        beta=fit.beta[None],
        fisher=fit.fisher[None],
        converged=np.array([fit.converged]),
        iterations=np.array([fit.iterations]),
        separated=np.array([fit.separation_flag]),
        weights=w[None],
        theta=theta[None],
        loglik=np.zeros(1),
    )
    d_null, d_resid, d_model = grid_deviances(batch, data, family)
    return LocalDeviances(float(d_null[0]), float(d_resid[0]), float(d_model[0]))
