"""
Canonical one-parameter exponential families.

Each family carries the cumulant function ``b``, its first two derivatives,
the canonical link ``G = (b')^{-1}`` and the normalising term ``c(y, phi)``.
All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, gammaln, logit, xlogy

from .errors import DomainError

__all__ = [
    "THETA_MAX",
    "Family",
    "MeanVariance",
    "bernoulli",
    "poisson",
    "gaussian",
    "get_family",
    "log_likelihood",
    "mean_variance",
    "deviance_contribution",
    "saturated_theta",
]

# canonical-parameter overflow guard for logit/log links
THETA_MAX = 30.0

_NAMES = ("bernoulli-logit", "poisson-log", "gaussian-identity")
_ALIASES = {
    "bernoulli": "bernoulli-logit",
    "binomial": "bernoulli-logit",
    "logit": "bernoulli-logit",
    "logistic": "bernoulli-logit",
    "poisson": "poisson-log",
    "gaussian": "gaussian-identity",
    "normal": "gaussian-identity",
}


class MeanVariance(NamedTuple):
    mu: np.ndarray
    v: np.ndarray
    saturated: np.ndarray


@dataclass(frozen=True)
class Family:
    """Canonical exponential family with fixed dispersion ``a(phi)``.

    Parameters
    ----------
    name : str
        One of ``bernoulli-logit``, ``poisson-log``, ``gaussian-identity``
        (short aliases such as ``"poisson"`` are accepted).
    dispersion : float
        The known value of ``a(phi)``; must be 1 for bernoulli and poisson.
    """

    name: str
    dispersion: float = 1.0

    def __post_init__(self):
        name = _ALIASES.get(self.name, self.name)
        if name not in _NAMES:
            raise ValueError(f"unknown family {self.name!r}")
        object.__setattr__(self, "name", name)
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")
        if name != "gaussian-identity" and self.dispersion != 1.0:
            raise ValueError(f"{name} has dispersion fixed at 1")

    @property
    def short(self) -> str:
        return self.name.split("-")[0]

    @property
    def bounded(self) -> bool:
        """True when the canonical link diverges at the edge of the mean range."""
        return self.name != "gaussian-identity"

    # cumulant function and derivatives -------------------------------------

    def b(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.name == "bernoulli-logit":
            return np.logaddexp(0.0, theta)
        if self.name == "poisson-log":
            return np.exp(theta)
        return 0.5 * theta * theta

    def mean(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.name == "bernoulli-logit":
            return expit(theta)
        if self.name == "poisson-log":
            return np.exp(theta)
        return theta.copy()

    def variance(self, theta):
        """``b''(theta)``, the variance function on the canonical scale."""
        theta = np.asarray(theta, dtype=float)
        if self.name == "bernoulli-logit":
            mu = expit(theta)
            return mu * (1.0 - mu)
        if self.name == "poisson-log":
            return np.exp(theta)
        return np.ones_like(theta)

    def link(self, mu):
        """Canonical link ``G(mu)``; infinite at the edges of the mean range."""
        mu = np.asarray(mu, dtype=float)
        if self.name == "bernoulli-logit":
            with np.errstate(divide="ignore"):
                return logit(mu)
        if self.name == "poisson-log":
            with np.errstate(divide="ignore"):
                return np.log(mu)
        return mu.copy()

    # likelihood pieces --------------------------------------------------------

    def c(self, y):
        y = np.asarray(y, dtype=float)
        if self.name == "bernoulli-logit":
            return np.zeros_like(y)
        if self.name == "poisson-log":
            return -gammaln(y + 1.0)
        phi = self.dispersion
        return -y * y / (2.0 * phi) - 0.5 * np.log(2.0 * np.pi * phi)

    def loglik(self, y, theta):
        """Per-observation log-likelihood, no response validation."""
        y = np.asarray(y, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return (y * theta - self.b(theta)) / self.dispersion + self.c(y)

    def saturated_loglik(self, y):
        """``l(y; G(y))`` in closed form, finite even where ``G(y)`` is not."""
        y = np.asarray(y, dtype=float)
        if self.name == "bernoulli-logit":
            return xlogy(y, y) + xlogy(1.0 - y, 1.0 - y)
        if self.name == "poisson-log":
            return xlogy(y, y) - y - gammaln(y + 1.0)
        return np.full_like(y, -0.5 * np.log(2.0 * np.pi * self.dispersion))

    def unit_deviance(self, y, theta):
        """``2[l_sat(y) - l(y; theta)]`` without validation; vectorised."""
        return 2.0 * (self.saturated_loglik(y) - self.loglik(y, theta))

    # validation ---------------------------------------------------------------

    def valid_response(self, y) -> np.ndarray:
        """Boolean mask of finite responses inside the family's support."""
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(y)
        if self.name == "bernoulli-logit":
            ok &= (y == 0.0) | (y == 1.0)
        elif self.name == "poisson-log":
            ok &= (y >= 0) & (y == np.floor(y))
        return ok

    def check_response(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("response contains non-finite values")
        bad = ~self.valid_response(y)
        if np.any(bad):
            rows = np.flatnonzero(np.ravel(bad))[:10].tolist()
            raise DomainError(
                f"response outside the {self.name} range at positions {rows}"
            )
        return y

    def mean_in_range(self, mu) -> np.ndarray:
        """Boolean mask of means strictly inside the open mean range."""
        mu = np.asarray(mu, dtype=float)
        if self.name == "bernoulli-logit":
            return (mu > 0.0) & (mu < 1.0)
        if self.name == "poisson-log":
            return mu > 0.0
        return np.isfinite(mu)


bernoulli = Family("bernoulli-logit")
poisson = Family("poisson-log")
gaussian = Family("gaussian-identity")


def get_family(name: str | Family, dispersion: float = 1.0) -> Family:
    if isinstance(name, Family):
        return name
    return Family(name, dispersion)


def log_likelihood(y, theta, family: Family):
    """``[y*theta - b(theta)]/a(phi) + c(y, phi)`` with response validation."""
    y = family.check_response(y)
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise DomainError("canonical parameter must be finite")
    out = family.loglik(y, theta)
    return float(out) if out.ndim == 0 else out


def mean_variance(theta, family: Family) -> MeanVariance:
    """Mean ``b'(theta)`` and variance function ``b''(theta)``.

    For the logit and log links ``theta`` is clamped to ``[-30, 30]`` first;
    the ``saturated`` mask marks the clamped entries.
    """
    theta = np.asarray(theta, dtype=float)
    if family.bounded:
        saturated = np.abs(theta) > THETA_MAX
        theta = np.clip(theta, -THETA_MAX, THETA_MAX)
    else:
        saturated = np.zeros(theta.shape, dtype=bool)
    return MeanVariance(family.mean(theta), family.variance(theta), saturated)


def deviance_contribution(y, mu_hat, family: Family):
    """Unit deviance ``2[l_sat(y) - l(y; G(mu_hat))]``.

    Raises
    ------
    DomainError
        If ``mu_hat`` is on the closed boundary of the mean range.
    """
    y = family.check_response(y)
    mu_hat = np.asarray(mu_hat, dtype=float)
    if not np.all(family.mean_in_range(mu_hat)):
        raise DomainError(f"fitted mean outside the open {family.name} range")
    dev = family.unit_deviance(y, family.link(mu_hat))
    dev = np.maximum(dev, 0.0)
    return float(dev) if dev.ndim == 0 else dev


def saturated_theta(y, family: Family):
    """``G(y)``; may be infinite (bernoulli y in {0,1}, poisson y=0)."""
    out = family.link(np.asarray(y, dtype=float))
    return float(out) if out.ndim == 0 else out
