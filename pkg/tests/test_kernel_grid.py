import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gplm_deviance import ContractError, SmoothConfig, boundary_factors
from gplm_deviance.kernel_grid import integrate_over_grid, kernel_matrix, kernel_mass, kernel_weight


class TestKernel:
    @pytest.mark.parametrize("u,k", [(0.0, 0.75), (1.0, 0.0), (0.5, 0.5625), (1.5, 0.0)])
    def test_values(self, u, k):
        assert kernel_weight(u) == pytest.approx(k)

    @given(st.floats(-3, 3))
    def test_symmetric(self, u):
        assert kernel_weight(u) == kernel_weight(-u)

    def test_unit_mass(self):
        u = np.linspace(-1, 1, 200001)
        assert np.trapezoid(kernel_weight(u), u) == pytest.approx(1.0, abs=1e-9)


class TestSmoothConfig:
    def test_spacing_constant(self):
        cfg = SmoothConfig(h=0.2, support=(-0.5, 1.0), n_grid=301)
        assert np.ptp(np.diff(cfg.grid)) < 1e-12
        assert cfg.spacing == pytest.approx(0.005)

    @pytest.mark.parametrize("kw", [{"h": 0.5}, {"h": 0.0}, {"h": 0.1, "n_grid": 50}, {"h": 0.1, "correction": "x"}])
    def test_rejects(self, kw):
        with pytest.raises((ContractError, ValueError)):
            SmoothConfig(**kw)

    def test_with_h_keeps_grid(self):
        cfg = SmoothConfig(h=0.2, degree=2, support=(-0.5, 1.0), n_grid=301)
        other = cfg.with_h(0.3)
        assert (other.degree, other.support, other.n_grid, other.h) == (2, (-0.5, 1.0), 301, 0.3)


class TestBoundaryFactors:
    def test_endpoint_and_interior_analytic(self):
        cfg = SmoothConfig(h=0.2, correction="analytic")
        bw = boundary_factors(np.array([0.0, 0.2, 0.5, 1.0]), cfg)
        np.testing.assert_allclose(bw.c, [2.0, 1.0, 1.0, 2.0])
        assert bw.interior.tolist() == [False, True, True, False]

    def test_half_bandwidth_matches_quadrature(self, frozen):
        ref = frozen["boundary_c"]
        cfg = SmoothConfig(h=ref["h"], correction="analytic")
        assert boundary_factors(np.array([ref["x"]]), cfg).c[0] == pytest.approx(ref["c"], rel=1e-12)

    @given(st.floats(0, 1))
    def test_analytic_mass_matches_fine_quadrature(self, x):
        cfg = SmoothConfig(h=0.15)
        u = np.linspace(0, 1, 400001)
        direct = np.trapezoid(kernel_weight((x - u) / cfg.h) / cfg.h, u)
        assert kernel_mass(np.array([x]), cfg)[0] == pytest.approx(direct, abs=1e-8)

    @pytest.mark.parametrize("support,G", [((0.0, 1.0), 201), ((-0.5, 1.0), 301), ((0.0, 1.0), 51)])
    @pytest.mark.parametrize("h", [0.1, 0.2, 0.3])
    def test_grid_weights_integrate_to_one(self, support, G, h):
        cfg = SmoothConfig(h=h, support=support, n_grid=G)
        x = np.random.default_rng(1).uniform(*support, 300)
        mass = integrate_over_grid(kernel_matrix(x, cfg), cfg)
        assert np.max(np.abs(mass - 1)) <= max(1e-6, cfg.spacing**2)

    def test_analytic_grid_mass_error(self):
        # analytic factors integrate to one exactly, but the grid sum of an
        # interior kernel is off by spacing^2 / (4 h^2)
        cfg = SmoothConfig(h=0.1, correction="analytic")
        mass = integrate_over_grid(kernel_matrix(np.array([0.5]), cfg), cfg)[0]
        assert mass - 1 == pytest.approx(-(cfg.spacing**2) / (4 * cfg.h**2), rel=1e-6)

    def test_none(self):
        cfg = SmoothConfig(h=0.2, correction="none")
        assert np.all(boundary_factors(np.array([0.0, 0.5]), cfg).c == 1)

    def test_outside_support(self):
        with pytest.raises(ContractError):
            boundary_factors(np.array([1.2]), SmoothConfig(h=0.2))


class TestIntegrate:
    @pytest.mark.parametrize("G", [51, 201, 1001])
    def test_constant_and_linear_exact(self, G):
        cfg = SmoothConfig(h=0.2, n_grid=G)
        assert integrate_over_grid(np.ones(G), cfg) == pytest.approx(1.0, abs=1e-14)
        assert integrate_over_grid(cfg.grid, cfg) == pytest.approx(0.5, abs=1e-14)

    def test_quadratic_error_bound(self):
        cfg = SmoothConfig(h=0.2)
        assert integrate_over_grid(cfg.grid**2, cfg) == pytest.approx(1 / 3, abs=2e-5)

    def test_vector_valued(self):
        cfg = SmoothConfig(h=0.2)
        vals = np.column_stack([np.ones(201), cfg.grid])
        np.testing.assert_allclose(integrate_over_grid(vals, cfg), [1.0, 0.5])

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            integrate_over_grid(np.ones(200), SmoothConfig(h=0.2))
