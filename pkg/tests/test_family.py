import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gplm_deviance import DomainError, Family, bernoulli, gaussian, get_family, poisson
from gplm_deviance.family import (
    THETA_MAX,
    deviance_contribution,
    log_likelihood,
    mean_variance,
    saturated_theta,
)

FAMILIES = [bernoulli, poisson, gaussian]


class TestLogLikelihood:
    def test_bernoulli_at_zero(self):
        assert log_likelihood(1, 0.0, bernoulli) == pytest.approx(-math.log(2), abs=1e-12)

    def test_poisson_includes_log_factorial(self):
        assert log_likelihood(2, 0.0, poisson) == pytest.approx(-1 - math.log(2), abs=1e-12)

    def test_gaussian_normalising_constant(self):
        expected = 1 - 0.5 - 0.5 - 0.5 * math.log(2 * math.pi)
        assert log_likelihood(1.0, 1.0, gaussian) == pytest.approx(expected, abs=1e-12)

    def test_gaussian_dispersion(self):
        fam = Family("gaussian", dispersion=2.0)
        y, th = 0.7, -0.4
        expected = (y * th - th * th / 2) / 2 - y * y / 4 - 0.5 * math.log(4 * math.pi)
        assert log_likelihood(y, th, fam) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("fam,y", [(bernoulli, 0.5), (bernoulli, 2), (poisson, -1), (poisson, 1.5)])
    def test_invalid_response(self, fam, y):
        with pytest.raises(DomainError):
            log_likelihood(y, 0.0, fam)

    def test_infinite_theta(self):
        with pytest.raises(DomainError):
            log_likelihood(1, np.inf, bernoulli)

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    @given(theta=st.floats(-5, 5))
    def test_score_matches_central_difference(self, fam, theta):
        y = 1.0
        step = 1e-5
        fd = (log_likelihood(y, theta + step, fam) - log_likelihood(y, theta - step, fam)) / (2 * step)
        assert fd == pytest.approx(y - fam.mean(theta), abs=1e-6)


class TestMeanVariance:
    @pytest.mark.parametrize(
        "fam,theta,mu,v",
        [(bernoulli, 0.0, 0.5, 0.25), (poisson, 0.0, 1.0, 1.0), (gaussian, 2.3, 2.3, 1.0)],
    )
    def test_values(self, fam, theta, mu, v):
        out = mean_variance(theta, fam)
        assert out.mu == pytest.approx(mu)
        assert out.v == pytest.approx(v)
        assert not out.saturated

    def test_saturation_flag_and_clamp(self):
        out = mean_variance(np.array([40.0, -35.0, 1.0]), poisson)
        assert out.saturated.tolist() == [True, True, False]
        assert out.mu[0] == pytest.approx(math.exp(THETA_MAX))
        assert np.all(out.v > 0)

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    def test_link_inverts_mean(self, fam):
        theta = np.linspace(-5, 5, 201)
        np.testing.assert_allclose(fam.link(fam.mean(theta)), theta, rtol=1e-12, atol=1e-12)

    def test_link_inverts_mean_to_guard(self):
        theta = np.linspace(-THETA_MAX, THETA_MAX, 121)
        np.testing.assert_allclose(poisson.link(poisson.mean(theta)), theta, rtol=1e-12, atol=1e-12)
        neg = theta[theta <= 0]
        np.testing.assert_allclose(bernoulli.link(bernoulli.mean(neg)), neg, rtol=1e-12, atol=1e-12)
        # for theta > 0 the mean itself carries only eps / (1 - mu) relative accuracy
        pos = theta[theta > 0]
        mu = bernoulli.mean(pos)
        bound = 2 * np.finfo(float).eps / (mu * (1 - mu))
        assert np.all(np.abs(bernoulli.link(mu) - pos) <= bound)

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    @given(theta=st.floats(-THETA_MAX, THETA_MAX))
    def test_variance_positive(self, fam, theta):
        assert mean_variance(theta, fam).v > 0


class TestDeviance:
    def test_bernoulli(self):
        assert deviance_contribution(1, 0.5, bernoulli) == pytest.approx(-2 * math.log(0.5))

    def test_poisson_zero_count(self):
        assert deviance_contribution(0, 1.0, poisson) == pytest.approx(2.0)

    def test_gaussian_is_squared_error(self):
        assert deviance_contribution(2.0, 1.0, gaussian) == pytest.approx(1.0)
        fam = Family("gaussian", 0.5)
        assert deviance_contribution(2.0, 1.0, fam) == pytest.approx(2.0)

    @pytest.mark.parametrize("mu", [0.0, 1.0])
    def test_boundary_mean_rejected(self, mu):
        with pytest.raises(DomainError):
            deviance_contribution(1, mu, bernoulli)

    def test_zero_at_observation(self):
        assert deviance_contribution(3.0, 3.0, poisson) == pytest.approx(0.0, abs=1e-12)
        assert deviance_contribution(-1.7, -1.7, gaussian) == 0.0

    @pytest.mark.parametrize("fam,y", [(bernoulli, 1.0), (bernoulli, 0.0), (poisson, 3.0), (gaussian, 0.4)])
    def test_increases_away_from_saturated(self, fam, y):
        # along the canonical line, deviance grows with distance from G(y)
        centre = float(np.clip(saturated_theta(y, fam), -4, 4))
        for sign in (1.0, -1.0):
            steps = centre + sign * np.linspace(0.01, 3.0, 60)
            d = fam.unit_deviance(y, steps)
            grows = np.diff(d) > 0
            if not np.isfinite(saturated_theta(y, fam)):
                # y on the boundary: deviance is monotone in theta itself
                grows = np.diff(d) > 0 if (y == 0) == (sign > 0) else np.diff(d) < 0
            assert grows.all()

    @given(y=st.integers(0, 50), log_mu=st.floats(-5, 5))
    def test_nonnegative(self, y, log_mu):
        assert deviance_contribution(y, math.exp(log_mu), poisson) >= 0


class TestSaturated:
    def test_values(self):
        assert saturated_theta(0.5, bernoulli) == 0.0
        assert saturated_theta(1, bernoulli) == math.inf
        assert saturated_theta(0, poisson) == -math.inf
        assert saturated_theta(3.0, gaussian) == 3.0

    def test_saturated_loglik_closed_form(self):
        y = np.array([0.0, 1.0, 4.0])
        expected = [0.0, -1.0, 4 * math.log(4) - 4 - math.lgamma(5)]
        np.testing.assert_allclose(poisson.saturated_loglik(y), expected, atol=1e-12)
        np.testing.assert_allclose(bernoulli.saturated_loglik(np.array([0.0, 1.0])), 0.0)


class TestFamilyObject:
    @pytest.mark.parametrize("alias,name", [("binomial", "bernoulli-logit"), ("poisson", "poisson-log"), ("normal", "gaussian-identity")])
    def test_aliases(self, alias, name):
        assert get_family(alias).name == name

    def test_unknown(self):
        with pytest.raises(ValueError):
            Family("gamma")

    def test_dispersion_fixed_for_discrete(self):
        with pytest.raises(ValueError):
            Family("poisson", 2.0)

    def test_valid_response_mask(self):
        assert poisson.valid_response(np.array([0, 1.5, -1, 2])).tolist() == [True, False, False, True]
