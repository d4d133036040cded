"""
Integrated likelihood ratio tests, deviance tables and pointwise bands.

The test statistic is twice the gap between the integrated local likelihood
and the maximised likelihood of the constant (or intercept plus ``Z``) null
model, referred to a chi-square distribution with ``tr(H_p*) - 1`` degrees
of freedom. The degrees of freedom are generally fractional.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import GplmError, NumericalError
from .family import Family
from .glm import glm_fit
from .gplm import GplmFit, fit_gplm
from .integrate import CurveFit
from .kernel_grid import SmoothConfig
from .local_fit import Dataset, _hankel, _moments, _null_theta

__all__ = [
    "TestResult",
    "DevianceTable",
    "PointwiseBand",
    "TraceRow",
    "chisq_sf",
    "chisq_cdf",
    "test_nonparametric",
    "test_gplm",
    "test_at",
    "deviance_table",
    "pointwise_ci",
    "significance_trace",
    "max_abs_correlation",
]

log = logging.getLogger(__name__)

NEG_CLAMP = -1e-8
_EPS = 1e-16
_MAX_TERMS = 10_000


def _gamma_series(a: float, x: float) -> float:
    # lower regularized P(a, x) by its power series; use for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_TERMS):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float) -> float:
    # upper regularized Q(a, x) by Lentz's continued fraction; use for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def _chisq_sf_scalar(x: float, df: float) -> float:
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    a, t = 0.5 * df, 0.5 * x
    if t == 0.0:  # x/2 underflowed
        return 1.0
    if t < a + 1.0:
        return 1.0 - _gamma_series(a, t)
    return _gamma_cf(a, t)


def _chisq_cdf_scalar(x: float, df: float) -> float:
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    a, t = 0.5 * df, 0.5 * x
    if t == 0.0:
        return 0.0
    if t < a + 1.0:
        return _gamma_series(a, t)
    return 1.0 - _gamma_cf(a, t)


def chisq_sf(x, df):
    """Upper tail ``Q(df/2, x/2)`` of the chi-square distribution.

    Fractional ``df`` is allowed. The series branch is used below
    ``x/2 = df/2 + 1``, the continued fraction above it.
    """
    if np.ndim(x) == 0 and np.ndim(df) == 0:
        return _chisq_sf_scalar(float(x), float(df))
    xs, ds = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(df, dtype=float))
    return np.array([_chisq_sf_scalar(a, b) for a, b in zip(xs.ravel(), ds.ravel())]).reshape(xs.shape)


def chisq_cdf(x, df):
    """Lower tail ``P(df/2, x/2)``; the complement of :func:`chisq_sf`."""
    if np.ndim(x) == 0 and np.ndim(df) == 0:
        return _chisq_cdf_scalar(float(x), float(df))
    xs, ds = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(df, dtype=float))
    return np.array([_chisq_cdf_scalar(a, b) for a, b in zip(xs.ravel(), ds.ravel())]).reshape(xs.shape)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_value: float
    h: float
    model: str
    diagnostics: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "h": self.h,
            "model": self.model,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class DevianceTable:
    rows: tuple  # (source, deviance, df)

    def __getitem__(self, source):
        for row in self.rows:
            if row[0] == source:
                return row
        raise KeyError(source)

    def to_dict(self) -> dict:
        return {src: {"deviance": dev, "df": df} for src, dev, df in self.rows}


def _finish(statistic: float, df: float, h: float, model: str, diagnostics=None) -> TestResult:
    if statistic < NEG_CLAMP:
        raise NumericalError(f"integrated likelihood ratio statistic {statistic} is negative")
    statistic = max(statistic, 0.0)
    if not df > 0:
        raise NumericalError(f"degrees of freedom {df} must be positive")
    return TestResult(
        statistic=float(statistic),
        df=float(df),
        p_value=float(chisq_sf(statistic, df)),
        h=float(h),
        model=model,
        diagnostics=diagnostics or {},
    )


def test_nonparametric(curve: CurveFit, data: Dataset, family: Family | None = None, cfg: SmoothConfig | None = None) -> TestResult:
    """Test ``m(x) = const`` in ``G(mu) = m(x)``."""
    family = curve.family if family is None else family
    cfg = curve.cfg if cfg is None else cfg
    a0 = _null_theta(family, data.y)
    l0 = float(np.sum(family.loglik(data.y, a0)))
    stat = 2.0 * (curve.int_loglik - l0)
    diag = {"separated_grid_points": curve.n_separated, "null_theta": a0}
    return _finish(stat, curve.df - 1.0, cfg.h, "nonparametric", diag)


def max_abs_correlation(z, x) -> float:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    cors = [abs(np.corrcoef(z[:, k], x)[0, 1]) for k in range(z.shape[1])]
    return float(max(cors)) if cors else 0.0


def test_gplm(fit: GplmFit | CurveFit, data: Dataset, family: Family | None = None, cfg: SmoothConfig | None = None) -> TestResult:
    """Test ``m(x) = const`` in ``G(mu) = z' alpha + m(x)``."""
    if isinstance(fit, CurveFit):
        return test_nonparametric(fit, data, family, cfg)
    family = fit.curve.family if family is None else family
    cfg = fit.curve.cfg if cfg is None else cfg
    null = fit.initial
    if null is None:
        null = glm_fit(np.column_stack([np.ones(data.n), data.z]), data.y, family)
    stat = 2.0 * (fit.int_loglik - null.loglik)
    diag = {
        "max_abs_corr_z_x": max_abs_correlation(data.z, data.x),
        "separated_grid_points": fit.curve.n_separated,
        "converged": fit.converged,
        "iterations": fit.iterations,
    }
    return _finish(stat, fit.df - 1.0, cfg.h, "gplm", diag)


def test_at(data: Dataset, family: Family, cfg: SmoothConfig, bw=None) -> TestResult:
    """Fit the model implied by ``data`` at ``cfg`` and run its test."""
    fit = fit_gplm(data, family, cfg, bw)
    if isinstance(fit, CurveFit):
        return test_nonparametric(fit, data, family, cfg)
    return test_gplm(fit, data, family, cfg)


def deviance_table(fit: GplmFit | CurveFit, data: Dataset) -> DevianceTable:
    """Integrated analysis-of-deviance table: model, residual, total."""
    curve = fit.curve if isinstance(fit, GplmFit) else fit
    k = fit.n_linear if isinstance(fit, GplmFit) else 0
    family = curve.family
    a0 = _null_theta(family, data.y)
    total = float(np.sum(family.unit_deviance(data.y, a0)))
    n = data.n
    return DevianceTable(
        rows=(
            ("model", curve.int_d_model, curve.df - 1.0),
            ("residual", curve.int_d_resid, n - curve.df - k),
            ("total", total, n - 1.0),
        )
    )


@dataclass(frozen=True)
class PointwiseBand:
    x: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    reliable: np.ndarray
    level: float
    variance: str


def pointwise_ci(fit: GplmFit | CurveFit, level: float = 0.95, variance: str = "sandwich") -> PointwiseBand:
    """Pointwise intervals for ``m(x)`` at the grid points.

    ``variance="sandwich"`` uses ``F^{-1} M F^{-1}`` with
    ``F = X'WVX`` and ``M = X'W^2VX``; ``variance="inverse"`` uses ``F^{-1}``.
    Intervals at separated windows are marked unreliable.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    curve = fit.curve if isinstance(fit, GplmFit) else fit
    fits = curve.fits
    cfg = curve.cfg
    fam = curve.family
    q = cfg.degree + 1
    f = fits.fisher
    if variance == "sandwich":
        d = curve.x[None, :] - cfg.grid[:, None]
        w = fits.weights
        m = _hankel(_moments(d, w * w * fam.variance(fits.theta), 2 * q - 2), q) / fam.dispersion
        finv = np.linalg.inv(f)
        cov = finv @ m @ finv
    elif variance == "inverse":
        cov = np.linalg.inv(f)
    else:
        raise ValueError(f"unknown variance {variance!r}")
    se = np.sqrt(np.maximum(cov[:, 0, 0], 0.0))
    est = fit.m_grid if isinstance(fit, GplmFit) else fits.beta[:, 0].copy()
    mult = NormalDist().inv_cdf(0.5 * (1.0 + level))
    return PointwiseBand(
        x=cfg.grid.copy(),
        estimate=est,
        se=se,
        lower=est - mult * se,
        upper=est + mult * se,
        reliable=~fits.separated & fits.converged,
        level=level,
        variance=variance,
    )


@dataclass(frozen=True)
class TraceRow:
    h: float
    df: float
    statistic: float
    p_value: float
    error: str = ""


def significance_trace(data: Dataset, family: Family, cfg: SmoothConfig, hs) -> list[TraceRow]:
    """Run the appropriate test at each bandwidth in ``hs``.

    Errors at one bandwidth are recorded in that row and do not stop the
    others.
    """
    hs = [float(h) for h in hs]
    if len(hs) < 2:
        log.warning("significance trace with a single bandwidth")
    rows = []
    for h in hs:
        try:
            res = test_at(data, family, cfg.with_h(h))
            rows.append(TraceRow(h, res.df, res.statistic, res.p_value))
        except (GplmError, ValueError) as exc:
            rows.append(TraceRow(h, math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}"))
    return rows
