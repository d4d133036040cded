"""
Bandwidth selection over a candidate list.

``select_aicc`` minimises the corrected AIC built from the integrated
residual deviance; ``select_hs`` picks the bandwidth with the largest
integrated likelihood ratio statistic. Ties go to the larger bandwidth.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GplmError, SelectionError
from .family import Family
from .gplm import GplmFit, fit_gplm
from .inference import TestResult, test_gplm, test_nonparametric
from .integrate import CurveFit
from .kernel_grid import SmoothConfig
from .local_fit import Dataset

__all__ = [
    "BandwidthChoice",
    "Candidate",
    "evaluate_candidates",
    "aicc_value",
    "select_aicc",
    "select_hs",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Candidate:
    h: float
    fit: GplmFit | CurveFit | None
    test: TestResult | None
    error: str = ""

    @property
    def curve(self) -> CurveFit:
        return self.fit.curve if isinstance(self.fit, GplmFit) else self.fit


@dataclass(frozen=True)
class BandwidthChoice:
    h_selected: float
    criterion_values: np.ndarray
    method: str
    candidates: tuple = field(default=(), repr=False)

    @property
    def selected(self) -> Candidate:
        for cand in self.candidates:
            if cand.h == self.h_selected:
                return cand
        raise LookupError(self.h_selected)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "h_selected": self.h_selected,
            "candidates": [c.h for c in self.candidates],
            "criterion_values": [float(v) for v in self.criterion_values],
        }


def evaluate_candidates(data: Dataset, family: Family, cfg: SmoothConfig, candidates) -> list[Candidate]:
    """Fit and test at every candidate bandwidth, recording failures per candidate."""
    out = []
    for h in candidates:
        h = float(h)
        try:
            c = cfg.with_h(h)
            fit = fit_gplm(data, family, c)
            if isinstance(fit, CurveFit):
                res = test_nonparametric(fit, data, family, c)
            else:
                res = test_gplm(fit, data, family, c)
            out.append(Candidate(h, fit, res))
        except (GplmError, ValueError) as exc:
            out.append(Candidate(h, None, None, f"{type(exc).__name__}: {exc}"))
    return out


def aicc_value(d_star: float, tr: float, n: int) -> float:
    """``log(D*/n) + 2(tr + 1)/(n - tr - 2)``; NaN when the denominator is not positive."""
    denom = n - tr - 2.0
    if denom <= 0 or d_star <= 0:
        return math.nan
    return math.log(d_star / n) + 2.0 * (tr + 1.0) / denom


def _argext(values, hs, sign):
    # extremum of sign*values, ties broken toward the larger bandwidth
    best = None
    for v, h in zip(values, hs):
        if not np.isfinite(v):
            continue
        key = (sign * v, h)
        if best is None or key > best[0]:
            best = (key, h)
    return None if best is None else best[1]


def _candidates(data, family, cfg, candidates):
    if isinstance(candidates, (list, tuple)) and candidates and isinstance(candidates[0], Candidate):
        return list(candidates)
    return evaluate_candidates(data, family, cfg, list(candidates))


def select_aicc(data: Dataset, family: Family, cfg: SmoothConfig, candidates) -> BandwidthChoice:
    """Minimise the integrated-deviance AICc over ``candidates``.

    Candidates with ``n - tr(H_p*) - 2 <= 0`` are skipped with a warning.

    Raises
    ------
    SelectionError
        Every candidate was excluded or failed.
    """
    cands = _candidates(data, family, cfg, candidates)
    vals = []
    for cand in cands:
        if cand.fit is None:
            vals.append(math.nan)
            continue
        curve = cand.curve
        v = aicc_value(curve.int_d_resid, curve.df, data.n)
        if math.isnan(v):
            log.warning("AICc undefined at h=%g (n - tr - 2 <= 0); candidate excluded", cand.h)
        vals.append(v)
    vals = np.array(vals)
    h = _argext(vals, [c.h for c in cands], -1.0)
    if h is None:
        raise SelectionError("no bandwidth candidate admits an AICc value")
    return BandwidthChoice(h, vals, "aicc", tuple(cands))


def _hs_score(test: TestResult | None, standardize: bool) -> float:
    if test is None:
        return math.nan
    if standardize:
        return (test.statistic - test.df) / math.sqrt(2.0 * test.df)
    return test.statistic


def select_hs(
    data: Dataset, family: Family, cfg: SmoothConfig, candidates, standardize: bool = False
) -> BandwidthChoice:
    """Pick the candidate with the largest test statistic (not the smallest p-value).

    Parameters
    ----------
    standardize : bool
        Maximise ``(T - df) / sqrt(2 df)`` instead of the raw statistic ``T``.
        Under the null the raw statistic grows with df, so the raw rule
        almost always picks the smallest bandwidth; the standardized rule
        spreads its choices over both ends of the candidate range.

    Raises
    ------
    SelectionError
        Every candidate failed.
    """
    cands = _candidates(data, family, cfg, candidates)
    if len(cands) == 1:
        log.warning("HS selection with a single candidate")
    vals = np.array([_hs_score(c.test, standardize) for c in cands])
    h = _argext(vals, [c.h for c in cands], 1.0)
    if h is None:
        raise SelectionError("every bandwidth candidate failed")
    return BandwidthChoice(h, vals, "hs", tuple(cands))
