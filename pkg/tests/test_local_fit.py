import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gplm_deviance import (
    Dataset,
    DegenerateNull,
    SmoothConfig,
    UnderdeterminedWindow,
    bernoulli,
    boundary_factors,
    fit_local,
    gaussian,
    local_deviances,
    poisson,
)
from gplm_deviance import local_fit as lf
from gplm_deviance.family import THETA_MAX
from gplm_deviance.kernel_grid import kernel_weight
from gplm_deviance.local_fit import LocalFit, fit_points, local_kl, local_theta

from conftest import random_dataset, seed42_bernoulli

FAMILIES = [bernoulli, poisson, gaussian]


def weights(data, x0, cfg):
    return kernel_weight((data.x - x0) / cfg.h) / cfg.h * boundary_factors(data.x, cfg).c


class TestAffineReproduction:
    @given(x0=st.floats(0, 1), h=st.floats(0.05, 0.45))
    @settings(max_examples=30, deadline=None)
    def test_gaussian_line(self, x0, h):
        x = np.linspace(0, 1, 40)
        data = Dataset(x, 2 * x + 1)
        fit = fit_local(x0, data, gaussian, SmoothConfig(h=h))
        np.testing.assert_allclose(fit.beta, [2 * x0 + 1, 2], atol=1e-9)
        assert local_theta(fit, 0.3) == pytest.approx(1.6, abs=1e-9)

    def test_quadratic_with_degree_two(self):
        x = np.linspace(0, 1, 60)
        data = Dataset(x, 1 - x + 3 * x**2)
        fit = fit_local(0.4, data, gaussian, SmoothConfig(h=0.2, degree=2))
        np.testing.assert_allclose(fit.beta, [1 - 0.4 + 3 * 0.16, -1 + 6 * 0.4, 3], atol=1e-8)


class TestLocalTheta:
    def test_at_point(self):
        fit = LocalFit(0.3, np.array([0.7, -1.0]), np.eye(2), True, 3, False)
        assert local_theta(fit, 0.3) == 0.7

    def test_linear(self):
        fit = LocalFit(0.0, np.array([1.0, 2.0]), np.eye(2), True, 3, False)
        assert local_theta(fit, 0.5) == 2.0

    def test_vectorised(self):
        fit = LocalFit(0.5, np.array([1.0, 0.0, 2.0]), np.eye(3), True, 3, False)
        np.testing.assert_allclose(local_theta(fit, np.array([0.5, 1.0])), [1.0, 1.5])


class TestBruteForceOracle:
    def test_matches_grid_search(self, frozen):
        for prob in frozen["local_mle"]:
            x = np.linspace(0, 1, prob["n"])
            rng = np.random.default_rng(prob["seed"])
            if prob["family"] == "bernoulli":
                fam, y = bernoulli, rng.binomial(1, 0.5, prob["n"])
            else:
                fam, y = poisson, rng.poisson(1.5, prob["n"])
            fit = fit_local(prob["x0"], Dataset(x, y.astype(float)), fam, SmoothConfig(h=prob["h"]))
            assert fit.converged
            np.testing.assert_allclose(fit.beta, prob["beta"], atol=1e-5)


class TestOptimality:
    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    @pytest.mark.parametrize("degree", [0, 1, 2])
    def test_score_and_orthogonality(self, fam, degree):
        data = random_dataset(fam, 150, seed=3)
        cfg = SmoothConfig(h=0.2, degree=degree)
        fits = fit_points(cfg.grid, data, fam, cfg)
        assert np.all(fits.converged)
        d = data.x[None, :] - cfg.grid[:, None]
        resid = (data.y[None, :] - fam.mean(fits.theta)) * fits.weights
        scale = (np.abs(data.y)[None, :] * fits.weights).sum(axis=1) + 1
        for j in range(degree + 1):
            assert np.all(np.abs((resid * d**j).sum(axis=1)) <= 1e-8 * scale)
        assert np.all(np.abs((resid * fits.theta).sum(axis=1)) <= 1e-8 * scale * (1 + np.abs(fits.theta).max()))

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    def test_fisher_positive_definite(self, fam):
        data = random_dataset(fam, 120, seed=4)
        cfg = SmoothConfig(h=0.25, degree=2)
        fits = fit_points(cfg.grid, data, fam, cfg)
        np.testing.assert_allclose(fits.fisher, np.swapaxes(fits.fisher, 1, 2))
        assert np.all(np.linalg.eigvalsh(fits.fisher)[:, 0] > 0)

    def test_iterations_monotone(self, monkeypatch):
        # capping the iteration count shows the objective never decreases
        data = seed42_bernoulli(60)
        cfg = SmoothConfig(h=0.15)
        w = weights(data, 0.05, cfg)
        values = []
        for cap in range(1, 8):
            monkeypatch.setattr(lf, "MAX_ITER", cap)
            fit = fit_local(0.05, data, bernoulli, cfg)
            th = local_theta(fit, data.x)
            values.append(np.sum(w * (data.y * th - bernoulli.b(th))))
        assert np.all(np.diff(values) >= -1e-12)

    def test_warm_start_same_answer(self):
        data = random_dataset(poisson, 100, seed=5)
        cfg = SmoothConfig(h=0.2)
        cold = fit_points(cfg.grid, data, poisson, cfg)
        warm = fit_points(cfg.grid, data, poisson, cfg, start=cold.beta + 0.3)
        np.testing.assert_allclose(warm.beta, cold.beta, atol=1e-6)

    def test_offset_shifts_intercept(self):
        data = random_dataset(gaussian, 80, seed=6)
        cfg = SmoothConfig(h=0.3)
        a = fit_local(0.5, data, gaussian, cfg)
        b = fit_local(0.5, data, gaussian, cfg, offset=np.full(data.n, 0.4))
        assert b.beta[0] == pytest.approx(a.beta[0] - 0.4)


class TestSeparation:
    def test_all_ones_window(self):
        x = np.linspace(0, 1, 40)
        y = (x > 0.5).astype(float)
        fit = fit_local(0.9, Dataset(x, y), bernoulli, SmoothConfig(h=0.1))
        assert fit.separation_flag
        assert fit.beta[0] == THETA_MAX

    def test_all_zeros_window(self):
        x = np.linspace(0, 1, 40)
        y = (x > 0.5).astype(float)
        fit = fit_local(0.1, Dataset(x, y), bernoulli, SmoothConfig(h=0.1))
        assert fit.separation_flag and fit.beta[0] == -THETA_MAX

    def test_poisson_zero_counts(self):
        x = np.linspace(0, 1, 40)
        y = np.where(x > 0.5, 2.0, 0.0)
        fit = fit_local(0.1, Dataset(x, y), poisson, SmoothConfig(h=0.1))
        assert fit.separation_flag and fit.beta[0] == -THETA_MAX

    def test_complete_separation_inside_window(self):
        # mixed window that is perfectly separated by x: the slope diverges
        x = np.linspace(0, 1, 41)
        y = (x > 0.5).astype(float)
        fit = fit_local(0.5, Dataset(x, y), bernoulli, SmoothConfig(h=0.2))
        assert fit.separation_flag
        assert not fit.converged


class TestUnderdetermined:
    def test_names_point(self):
        x = np.array([0.0, 0.05, 0.9, 1.0])
        data = Dataset(x, np.array([0.0, 1.0, 1.0, 0.0]))
        with pytest.raises(UnderdeterminedWindow) as info:
            fit_local(0.5, data, bernoulli, SmoothConfig(h=0.1))
        assert "0.5" in str(info.value)

    def test_repeated_design_points(self):
        x = np.array([0.5, 0.5, 0.5, 0.0, 1.0])
        data = Dataset(x, np.array([1.0, 2.0, 3.0, 0.0, 1.0]))
        with pytest.raises(UnderdeterminedWindow):
            fit_local(0.5, data, gaussian, SmoothConfig(h=0.1))


def direct_terms(fam, data, fit, w):
    # each deviance written out from its definition, family by family
    y = data.y
    th = local_theta(fit, data.x)
    ybar = y.mean()
    if fam is bernoulli:
        mu = 1 / (1 + np.exp(-th))
        ll = lambda m: y * np.log(m) + (1 - y) * np.log(1 - m)
        d_resid = -2 * np.sum(w * ll(mu))
        d_null = -2 * np.sum(w * ll(np.full_like(y, ybar)))
    elif fam is poisson:
        mu = np.exp(th)
        sat = np.where(y > 0, y * np.log(np.where(y > 0, y, 1)) - y, 0.0)
        d_resid = 2 * np.sum(w * (sat - (y * np.log(mu) - mu)))
        d_null = 2 * np.sum(w * (sat - (y * np.log(ybar) - ybar)))
    else:
        d_resid = np.sum(w * (y - th) ** 2)
        d_null = np.sum(w * (y - ybar) ** 2)
    return d_null, d_resid


class TestLocalDeviances:
    def test_gaussian_weighted_rss(self):
        x = np.array([0.1, 0.3, 0.45, 0.6, 0.85])
        y = np.array([1.0, -0.5, 0.3, 2.0, 0.1])
        data = Dataset(x, y)
        cfg = SmoothConfig(h=0.3)
        fit = fit_local(0.5, data, gaussian, cfg)
        w = weights(data, 0.5, cfg)
        rss = np.sum(w * (y - local_theta(fit, x)) ** 2)
        assert local_deviances(fit, data, gaussian, cfg).d_resid == pytest.approx(rss, rel=1e-12)

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    def test_constant_fit_has_zero_model_deviance(self, fam):
        data = random_dataset(fam, 50, seed=7)
        cfg = SmoothConfig(h=0.2, degree=0)
        fit = LocalFit(0.4, np.array([fam.link(data.y.mean())]), np.eye(1), True, 1, False)
        assert local_deviances(fit, data, fam, cfg).d_model == pytest.approx(0.0, abs=1e-12)

    def test_seed42_identity(self):
        data = seed42_bernoulli(20)
        cfg = SmoothConfig(h=0.3)
        fit = fit_local(0.5, data, bernoulli, cfg)
        dev = local_deviances(fit, data, bernoulli, cfg)
        d_null, d_resid = direct_terms(bernoulli, data, fit, weights(data, 0.5, cfg))
        assert dev.d_null == pytest.approx(d_null, rel=1e-12)
        assert dev.d_resid == pytest.approx(d_resid, rel=1e-12)
        assert abs(dev.d_null - dev.d_resid - dev.d_model) <= 1e-9 * dev.d_null

    @pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.short)
    @pytest.mark.parametrize("x0", [0.0, 0.37, 1.0])
    def test_direct_evaluation(self, fam, x0):
        data = random_dataset(fam, 90, seed=8)
        cfg = SmoothConfig(h=0.2)
        fit = fit_local(x0, data, fam, cfg)
        dev = local_deviances(fit, data, fam, cfg)
        d_null, d_resid = direct_terms(fam, data, fit, weights(data, x0, cfg))
        np.testing.assert_allclose([dev.d_null, dev.d_resid], [d_null, d_resid], rtol=1e-10)
        assert abs(dev.d_null - dev.d_resid - dev.d_model) <= 1e-9 * max(1, dev.d_null)

    def test_degenerate_null(self):
        x = np.linspace(0, 1, 20)
        data = Dataset(x, np.ones(20))
        cfg = SmoothConfig(h=0.2)
        fit = fit_local(0.5, data, bernoulli, cfg)
        with pytest.raises(DegenerateNull):
            local_deviances(fit, data, bernoulli, cfg)


class TestLocalKL:
    def test_gaussian_is_squared_distance(self):
        w = np.array([0.2, 0.5, 0.3])
        t1, t2 = np.array([0.1, 0.4, -1.0]), np.array([0.3, 0.0, -0.5])
        assert local_kl(gaussian, t1, t2, w) == pytest.approx(np.sum(w * (t1 - t2) ** 2))

    @pytest.mark.parametrize("fam", [bernoulli, poisson], ids=lambda f: f.short)
    @given(a=st.floats(-4, 4), b=st.floats(-4, 4))
    def test_nonnegative_and_zero_on_diagonal(self, fam, a, b):
        w = np.ones(1)
        assert local_kl(fam, np.array([a]), np.array([b]), w) >= -1e-12
        assert local_kl(fam, np.array([a]), np.array([a]), w) == 0.0
