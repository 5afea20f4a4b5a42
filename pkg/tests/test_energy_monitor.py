import math

import numpy as np
import pytest

from mhdblowlab.energy_monitor import (DecayFit, coefficient_conditions,
                                       energy_balance_check, fit_decay,
                                       hs_norm, l2_norm, poincare_constant,
                                       trim_positive_window)
from mhdblowlab.exact_fields import ModelParams
from mhdblowlab.gridops import Grid, sine_mode


class TestNorms:
    def test_constant_field(self):
        g = Grid(24)
        u = np.ones((24, 24, 24))
        val = l2_norm(g, u)
        assert abs(val - 1.0) < 3.0 / (2 * 24) + 1e-6

    def test_sine_product(self):
        g = Grid(24)
        u = sine_mode(g, (1, 1, 1))
        assert abs(l2_norm(g, u) - (0.5) ** 1.5) < 0.01 * (0.5) ** 1.5

    def test_zero_field(self):
        g = Grid(8)
        assert l2_norm(g, g.zeros()) == 0.0
        assert hs_norm(g, g.zeros(), 2) == 0.0

    def test_hs_ordering(self, rng):
        g = Grid(10)
        u = rng.standard_normal((10, 10, 10))
        n0 = hs_norm(g, u, 0)
        n1 = hs_norm(g, u, 1)
        n2 = hs_norm(g, u, 2)
        assert n0 <= n1 <= n2
        assert n0 == l2_norm(g, u)

    def test_hs_rejects_large_s(self):
        g = Grid(8)
        with pytest.raises(ValueError):
            hs_norm(g, g.zeros(), 3)


class TestFitDecay:
    def test_recovers_planted_rate(self):
        taus = np.linspace(0.0, 3.0, 200)
        series = 2.0 * np.exp(-2.0 * taus)
        fit = fit_decay(taus, series, window=(0.5, 3.0))
        assert abs(fit.rate - 2.0) < 1e-6
        assert fit.goodness > 1.0 - 1e-9

    def test_constant_series(self):
        taus = np.linspace(0.0, 2.0, 50)
        fit = fit_decay(taus, np.full(50, 0.7), window=(0.0, 2.0))
        assert abs(fit.rate) < 1e-12

    def test_zero_sample_flags_degenerate(self):
        taus = np.linspace(0.0, 1.0, 20)
        series = np.exp(-taus)
        series[-1] = 0.0
        fit = fit_decay(taus, series, window=(0.0, 1.0))
        assert fit.degenerate and math.isinf(fit.rate)

    def test_window_too_small(self):
        taus = np.linspace(0.0, 1.0, 20)
        with pytest.raises(ValueError):
            fit_decay(taus, np.exp(-taus), window=(0.99, 1.0))

    def test_trim_positive_window(self):
        taus = np.linspace(0.0, 3.0, 31)
        series = np.exp(-200.0 * taus)
        series[taus > 2.0] = 0.0
        lo, hi = trim_positive_window(taus, series, lo=0.5, floor=1e-300)
        assert lo == 0.5
        assert hi <= 2.0
        fit = fit_decay(taus, series, window=(lo, hi))
        assert not fit.degenerate
        assert abs(fit.rate - 200.0) < 1e-6


class TestEnergyBalance:
    def test_zero_trajectory(self):
        taus = np.linspace(0.0, 1.0, 11)
        rep = energy_balance_check(taus, np.zeros(11), np.zeros(11))
        assert rep["max_mismatch"] == 0.0

    def test_exact_exponential(self):
        # analytic energy E = e^(-2 tau) with exact inner product -2E:
        # mismatch is the centered-difference truncation error, O(dt^2)
        def mismatch(dt):
            taus = np.arange(0.0, 1.0 + dt / 2, dt)
            E = np.exp(-2.0 * taus)
            rep = energy_balance_check(taus, E, -2.0 * E)
            return rep["max_mismatch"]
        assert mismatch(0.005) < 0.3 * mismatch(0.01)


class TestPoincare:
    def test_limit_value(self):
        rep = poincare_constant(Grid(32))
        assert abs(rep["lambda1"] - 3.0 * math.pi ** 2) < 0.01 * 3.0 * math.pi ** 2

    def test_coarse_positive(self):
        rep = poincare_constant(Grid(4))
        assert rep["lambda1"] > 0.0

    def test_eigenvector_shape(self):
        g = Grid(16)
        rep = poincare_constant(g)
        v = rep["eigenvector"]
        ref = sine_mode(g, (1, 1, 1))
        cos_sim = abs(float(np.sum(v * ref))) / (
            math.sqrt(float(np.sum(v * v))) * math.sqrt(float(np.sum(ref * ref))))
        assert cos_sim >= 0.999

    def test_discrete_poincare_inequality(self, rng):
        from mhdblowlab.energy_monitor import hs_seminorm
        g = Grid(12)
        lam1 = poincare_constant(g)["lambda1"]
        for _ in range(5):
            u = rng.standard_normal((12, 12, 12))
            lhs = hs_seminorm(g, u, 1) ** 2
            rhs = lam1 * l2_norm(g, u) ** 2
            assert lhs >= rhs * (1.0 - 1e-10)


class TestCoefficientConditions:
    def test_strong_dissipation(self):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=10.0, mu=10.0)
        rep = coefficient_conditions(p, s=2, c_r_estimate=0.1)
        assert rep["all_positive"]
        assert rep["gates"]["a_below_min_dissipation"]
        assert rep["gates"]["a_in_stability_range"]

    def test_weak_dissipation(self):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=0.1, mu=0.1)
        rep = coefficient_conditions(p, s=2, c_r_estimate=0.1)
        assert not rep["all_positive"]

    def test_boundary_is_strict(self):
        # 3 nu + a - 7/4 - C = 0 exactly in binary: nu=1/2, a=1/4, C=0
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=0.5, mu=10.0)
        rep = coefficient_conditions(p, s=2, c_r_estimate=0.0)
        assert rep["conditions"]["l2_h_plane"]["value"] == 0.0
        assert not rep["conditions"]["l2_h_plane"]["positive"]

    def test_spot_margin_value(self):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=10.0, mu=10.0)
        rep = coefficient_conditions(p, s=2, c_r_estimate=0.1)
        assert math.isclose(rep["conditions"]["l2_h_plane"]["value"],
                            30.0 + 0.25 - 1.75 - 0.1)
