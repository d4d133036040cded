"""
Analysis of deviance for generalized partially linear models.

Local polynomial likelihood fits on a grid are integrated over the covariate
support; the integrated likelihood gives a chi-square test of ``m(x) = const``
with fractional degrees of freedom ``tr(H_p*) - 1``.
"""

from .bandwidth import BandwidthChoice, Candidate, select_aicc, select_hs
from .errors import (
    ContractError,
    CurveError,
    DegenerateNull,
    DesignError,
    DomainError,
    GplmError,
    NumericalError,
    SelectionError,
    UnderdeterminedWindow,
)
from .family import Family, bernoulli, gaussian, get_family, poisson
from .glm import GlmResult, glm_fit
from .gplm import GplmFit, fit_gplm, integrated_score, nested_local_identity
from .inference import (
    DevianceTable,
    PointwiseBand,
    TestResult,
    TraceRow,
    chisq_cdf,
    chisq_sf,
    deviance_table,
    pointwise_ci,
    significance_trace,
    test_at,
    test_gplm,
    test_nonparametric,
)
from .integrate import CurveFit, fit_curve, smoother_df
from .kernel_grid import SmoothConfig, boundary_factors
from .local_fit import Dataset, fit_local, local_deviances
from .simulate import Cell, Dgp, generate, qq_dump, run_cells

__version__ = "0.1.0"

__all__ = [
    "BandwidthChoice", "Candidate", "Cell", "ContractError", "CurveError", "CurveFit",
    "Dataset", "DegenerateNull", "DesignError", "DevianceTable", "Dgp", "DomainError",
    "Family", "GlmResult", "GplmError", "GplmFit", "NumericalError", "PointwiseBand",
    "SelectionError", "SmoothConfig", "TestResult", "TraceRow", "UnderdeterminedWindow",
    "bernoulli", "boundary_factors", "chisq_cdf", "chisq_sf", "deviance_table",
    "fit_curve", "fit_gplm", "fit_local", "gaussian", "generate", "get_family",
    "glm_fit", "integrated_score", "local_deviances", "nested_local_identity",
    "pointwise_ci", "poisson", "qq_dump", "run_cells", "select_aicc", "select_hs",
    "significance_trace", "smoother_df", "test_at", "test_gplm", "test_nonparametric",
]
