import math

import numpy as np
import pytest

from mhdblowlab.energy_monitor import (energy_balance_check, fit_decay,
                                       l2_norm, trim_positive_window)
from mhdblowlab.exact_fields import ModelParams
from mhdblowlab.gridops import Grid, max_divergence
from mhdblowlab.linsolver import (Background, LinState, SolverConfig,
                                  SolverDivergenceError, assemble_f_bar,
                                  assemble_rhs, make_background,
                                  make_divfree_init, manufactured_convergence,
                                  manufactured_time_order, run, step,
                                  tau_coefficients)

PARAMS = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=10.0, mu=10.0, t_star=1.0)


def small_cfg(n=8, **kw):
    defaults = dict(params=PARAMS, grid=Grid(n), dtau=1e-3, tau_end=0.05)
    defaults.update(kw)
    return SolverConfig(**defaults)


# -- independent dense oracle ---------------------------------------------------

def naive_dx(u, axis, h):
    """Loop-free but index-explicit centered difference with zero boundary."""
    n = u.shape[0]
    out = np.zeros_like(u)
    for idx in np.ndindex(u.shape):
        up = list(idx)
        dn = list(idx)
        up[axis] += 1
        dn[axis] -= 1
        hi = u[tuple(up)] if up[axis] < n else 0.0
        lo = u[tuple(dn)] if dn[axis] >= 0 else 0.0
        out[idx] = (hi - lo) / (2.0 * h)
    return out


def naive_poisson(rhs, h):
    """Dense solve of the compact Dirichlet Laplacian."""
    n = rhs.shape[0]
    N = n ** 3
    A = np.zeros((N, N))
    def flat(i, j, l):
        return (i * n + j) * n + l
    for i in range(n):
        for j in range(n):
            for l in range(n):
                row = flat(i, j, l)
                A[row, row] = -6.0 / h ** 2
                for di, dj, dl in ((1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                   (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                    ii, jj, ll = i + di, j + dj, l + dl
                    if 0 <= ii < n and 0 <= jj < n and 0 <= ll < n:
                        A[row, flat(ii, jj, ll)] = 1.0 / h ** 2
    return np.linalg.solve(A, rhs.ravel()).reshape(rhs.shape)


def naive_rhs(p, n, tau, h, q, w, b):
    """Literal per-equation transliteration of the six-field right-hand side."""
    grid_h = 1.0 / (n + 1)
    c = np.arange(1, n + 1) * grid_h
    y1 = c[:, None, None]
    y2 = c[None, :, None]
    y3 = c[None, None, :]
    a, ab, T = p.a, p.a_bar, p.t_bar_star
    kap = p.k * T ** (2 * a + 1) * math.exp(-(2 * a + 1) * tau)
    sig = p.kbar * T ** (2 * a + 0.5) * math.exp(-(2 * a + 0.5) * tau)
    bet = math.sqrt(T) * math.exp(-0.5 * tau)
    gam = T * math.exp(-tau)
    rho = p.k * T ** (2 * a) * math.exp(-2 * a * tau)
    kap_sw = p.kbar * T ** (2 * a + 1) * math.exp(-(2 * a + 1) * tau)
    d = lambda u, ax: naive_dx(u, ax, grid_h)

    dh = [[d(h[i], ax) for ax in range(3)] for i in range(3)]
    dq = [[d(q[i], ax) for ax in range(3)] for i in range(3)]
    dw = [[d(w[i], ax) for ax in range(3)] for i in range(3)]
    db = [[d(b[i], ax) for ax in range(3)] for i in range(3)]

    def drift(du):
        return ((0.5 - a) * (y1 * du[0] + y2 * du[1])
                + (0.5 + 2 * a) * y3 * du[2])

    # pressure functional
    bracket = rho * (dh[1][0] - dh[0][1])
    bracket = bracket - bet * ab * (dq[0][0] + dq[1][1] - 2 * dq[2][2])
    bracket = bracket - kap_sw * (y3 * (dq[1][0] - dq[0][1])
                                  + y2 * dq[2][0] - y1 * dq[2][1])
    for i in range(3):
        bracket = bracket + dw[i][i] * dh[i][i] - db[i][i] * dq[i][i]
    for i in range(3):
        for j in range(3):
            if i != j:
                bracket = bracket + dh[j][i] * dw[i][j] - dq[j][i] * db[i][j]
    fbar = -2.0 * naive_poisson(bracket, grid_h)
    fbar = fbar - 0.5 * gam * (b[0] * q[0] + b[1] * q[1] + b[2] * q[2])
    fbar = fbar - bet * ab * (y1 * q[0] + y2 * q[1] - 2 * y3 * q[2])
    fbar = fbar - kap_sw * (y2 * y3 * q[0] - y1 * y3 * q[1])
    dfbar = [d(fbar, ax) for ax in range(3)]

    rhs_h = [
        drift(dh[0]) - a * h[0] - kap * (h[1] + y2 * dh[0][0] + y1 * dh[0][1]),
        drift(dh[1]) - a * h[1] + kap * (h[0] - y2 * dh[1][0] + y1 * dh[1][1]),
        drift(dh[2]) + 2 * a * h[2] - kap * (y2 * dh[2][0] - y1 * dh[2][1]),
    ]
    for j in range(3):
        coupling = sum(h[i] * dw[j][i] + w[i] * dh[j][i] for i in range(3))
        rhs_h[j] = rhs_h[j] - bet * coupling + math.sqrt(T) * dfbar[j]

    rhs_q = [
        drift(dq[0]) + a * q[0] - ab * gam * h[0]
        + ab * (y1 * dh[0][0] + y2 * dh[1][0] - 2 * y3 * dh[2][0])
        - kap * (-h[1] + y2 * dq[0][0] + y1 * dq[0][1])
        - sig * (y1 * y3 * dh[1][0] - y2 * y3 * dh[0][0] - gam * y3 * h[1]),
        drift(dq[1]) + a * q[1] - ab * gam * h[1]
        + ab * (y1 * dh[0][1] + y2 * dh[1][1] - 2 * y3 * dh[2][1])
        + kap * (-h[0] - y2 * dq[1][0] + y1 * dq[1][1])
        - sig * (y1 * y3 * dh[1][1] - y2 * y3 * dh[0][1] + gam * y3 * h[0]),
        drift(dq[2]) - 2 * a * q[2] + 2 * ab * gam * h[2]
        + ab * (y1 * dh[0][2] + y2 * dh[1][2] - 2 * y3 * dh[2][2])
        - kap * (y2 * dq[2][0] - y1 * dq[2][1])
        - sig * (y1 * y3 * dh[1][2] - y2 * y3 * dh[0][2]
                 + gam * (y2 * h[0] - y1 * h[1])),
    ]
    for j in range(3):
        coupling = sum(h[i] * db[j][i] - b[i] * dh[j][i]
                       - q[i] * dw[j][i] + w[i] * dq[j][i] for i in range(3))
        rhs_q[j] = rhs_q[j] + bet * coupling
    return np.stack(rhs_h), np.stack(rhs_q), fbar


class TestDenseOracle:
    def test_rhs_and_pressure_functional(self, rng):
        n = 6
        grid = Grid(n)
        p = ModelParams(a=0.3, k=0.7, a_bar=0.9, nu=1.0, mu=2.0,
                        t_star=1.5, t_bar_star=1.5)
        tau = 0.37
        shape = (3, n, n, n)
        h = rng.standard_normal(shape)
        q = rng.standard_normal(shape)
        w = 0.1 * rng.standard_normal(shape)
        b = 0.1 * rng.standard_normal(shape)

        want_h, want_q, want_fbar = naive_rhs(p, n, tau, h, q, w, b)
        got_fbar = assemble_f_bar(grid, p, tau, h, q, w, b)
        got_h, got_q = assemble_rhs(grid, p, tau, h, q, w, b)

        scale = np.abs(want_h).max()
        assert np.abs(got_fbar - want_fbar).max() <= 1e-9 * scale
        assert np.abs(got_h - want_h).max() <= 1e-9 * scale
        assert np.abs(got_q - want_q).max() <= 1e-9 * scale

    def test_background_dropout(self, rng):
        # zero background reduces the assembly to the uncoupled block
        n = 6
        grid = Grid(n)
        p = ModelParams(a=0.3, k=0.7, a_bar=0.9, t_star=1.5)
        shape = (3, n, n, n)
        h = rng.standard_normal(shape)
        q = rng.standard_normal(shape)
        z = np.zeros(shape)
        a_h, a_q = assemble_rhs(grid, p, 0.2, h, q, w=z, b=z)
        b_h, b_q = assemble_rhs(grid, p, 0.2, h, q)
        assert np.array_equal(a_h, b_h) and np.array_equal(a_q, b_q)


class TestStepBasics:
    def test_zero_state_stays_zero(self):
        cfg = small_cfg()
        st = LinState(cfg.grid.zeros_vec(), cfg.grid.zeros_vec(), 0.0)
        out = step(st, cfg)
        assert not out.h.any() and not out.q.any()

    def test_zero_run_is_zero(self):
        cfg = small_cfg(tau_end=0.02)
        st = LinState(cfg.grid.zeros_vec(), cfg.grid.zeros_vec(), 0.0)
        res = run(cfg, st)
        assert not res.l2_h.any() and not res.l2_q.any()

    def test_post_step_divergence(self, rng):
        cfg = small_cfg(n=12)
        h0 = make_divfree_init(cfg.grid, rng)
        q0 = make_divfree_init(cfg.grid, rng)
        st = step(LinState(h0, q0, 0.0), cfg)
        assert max_divergence(cfg.grid, st.h) <= cfg.proj_tol
        assert max_divergence(cfg.grid, st.q) <= cfg.proj_tol

    def test_scaling_linearity_power_of_two(self, rng):
        # doubling the data doubles the whole trajectory bitwise
        cfg = small_cfg(n=8, tau_end=0.01)
        h0 = make_divfree_init(cfg.grid, rng)
        q0 = make_divfree_init(cfg.grid, rng)
        a = run(cfg, LinState(h0, q0, 0.0))
        b = run(cfg, LinState(2.0 * h0, 2.0 * q0, 0.0))
        assert np.array_equal(2.0 * a.final_state.h, b.final_state.h)
        assert np.array_equal(2.0 * a.final_state.q, b.final_state.q)

    def test_superposition(self, rng):
        cfg = small_cfg(n=8, tau_end=0.01)
        g = cfg.grid
        h0, q0 = make_divfree_init(g, rng), make_divfree_init(g, rng)
        h1, q1 = make_divfree_init(g, rng), make_divfree_init(g, rng)
        ra = run(cfg, LinState(h0, q0, 0.0)).final_state
        rb = run(cfg, LinState(h1, q1, 0.0)).final_state
        rc = run(cfg, LinState(h0 + h1, q0 + q1, 0.0)).final_state
        scale = np.abs(rc.h).max() + np.abs(rc.q).max()
        assert np.abs(ra.h + rb.h - rc.h).max() <= 1e-10 * scale
        assert np.abs(ra.q + rb.q - rc.q).max() <= 1e-10 * scale

    def test_drift_step_against_pointwise_euler(self):
        # pure drift: nu = mu = 0, no rotation or coupling, no pressure
        p = ModelParams(a=0.3, k=0.0, a_bar=0.0, nu=0.0, mu=0.0, t_star=1.0)
        n = 12
        grid = Grid(n)
        dtau = 5e-4
        cfg = SolverConfig(params=p, grid=grid, dtau=dtau, tau_end=dtau,
                           include_pressure=False, project=False)
        c = grid.coords
        s1 = np.sin(np.pi * c)[:, None, None]
        s2 = np.sin(np.pi * c)[None, :, None]
        s3 = np.sin(np.pi * c)[None, None, :]
        base = s1 * s2 * s3
        st = LinState(np.stack([base, 0.5 * base, -0.3 * base]),
                      np.stack([0.2 * base, base, 0.4 * base]), 0.0)
        out = step(st, cfg)

        i = j = l = n // 2
        y = (np.pi * np.cos(np.pi * c[i]) * np.sin(np.pi * c[j])
             * np.sin(np.pi * c[l]),
             np.pi * np.sin(np.pi * c[i]) * np.cos(np.pi * c[j])
             * np.sin(np.pi * c[l]),
             np.pi * np.sin(np.pi * c[i]) * np.sin(np.pi * c[j])
             * np.cos(np.pi * c[l]))
        a = p.a
        drift = ((0.5 - a) * (c[i] * y[0] + c[j] * y[1])
                 + (0.5 + 2 * a) * c[l] * y[2])
        val0 = base[i, j, l]
        euler = val0 + dtau * (drift - a * val0)
        got = out.h[0, i, j, l]
        assert abs(got - euler) <= 30.0 * dtau * grid.h ** 2 + 1e-12

    def test_cfl_guard(self):
        with pytest.raises(ValueError):
            small_cfg(n=8, dtau=0.2, tau_end=0.4)

    def test_divergence_abort(self, rng):
        cfg = small_cfg(n=8, tau_end=0.02, abort_factor=1e-9)
        h0 = make_divfree_init(cfg.grid, rng)
        with pytest.raises(SolverDivergenceError):
            run(cfg, LinState(h0, np.zeros_like(h0), 0.0))


class TestBackground:
    def test_ball_validation(self, rng):
        grid = Grid(8)
        bg = make_background(grid, rng, radius=0.05)
        bg.validate(grid)
        bad = Background(bg.w * 100.0, bg.b, radius=0.05)
        with pytest.raises(ValueError):
            bad.validate(grid)

    def test_run_with_background_decays(self, rng):
        cfg = small_cfg(n=8, tau_end=0.4, dtau=2e-3)
        bg = make_background(cfg.grid, rng, radius=0.01)
        h0 = make_divfree_init(cfg.grid, rng)
        q0 = make_divfree_init(cfg.grid, rng)
        res = run(cfg, LinState(h0, q0, 0.0), background=bg)
        total = res.l2_h + res.l2_q
        assert total[-1] < total[0]


class TestDecayQualitative:
    def test_monotone_decay_and_positive_rate(self, rng):
        cfg = small_cfg(n=12, dtau=2e-3, tau_end=1.0)
        h0 = make_divfree_init(cfg.grid, rng)
        q0 = make_divfree_init(cfg.grid, rng)
        res = run(cfg, LinState(h0, q0, 0.0))
        total = res.l2_h + res.l2_q
        after = total[res.taus >= 0.5]
        assert np.all(np.diff(after) <= after[:-1] * 1e-12 + 1e-300)
        window = trim_positive_window(res.taus, total, lo=0.3)
        fit = fit_decay(res.taus, total, window)
        assert fit.rate > 0.0
        assert fit.goodness >= 0.95

    def test_doubling_nu_does_not_decrease_rate(self, rng):
        rates = []
        for nu in (2.0, 4.0):
            p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=nu, mu=2.0, t_star=1.0)
            cfg = SolverConfig(params=p, grid=Grid(10), dtau=2e-3, tau_end=1.0)
            r = np.random.default_rng(7)
            h0 = make_divfree_init(cfg.grid, r)
            q0 = make_divfree_init(cfg.grid, r)
            res = run(cfg, LinState(h0, q0, 0.0))
            total = res.l2_h + res.l2_q
            window = trim_positive_window(res.taus, total, lo=0.3)
            rates.append(fit_decay(res.taus, total, window).rate)
        # coupled blocks pin each other at the slower of the two dissipation
        # rates, so raising one coefficient must never lower the fit beyond
        # noise level
        assert rates[1] >= rates[0] * (1.0 - 1e-3)

    def test_projected_scheme_also_decays(self, rng):
        cfg = small_cfg(n=8, dtau=2e-3, tau_end=0.6, scheme="projected")
        h0 = make_divfree_init(cfg.grid, rng)
        q0 = make_divfree_init(cfg.grid, rng)
        res = run(cfg, LinState(h0, q0, 0.0))
        total = res.l2_h + res.l2_q
        assert total[-1] < 1e-3 * total[0]


class TestEnergyBalance:
    def test_mismatch_halves_with_dtau(self, rng):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=1.0, mu=1.0, t_star=1.0)
        grid = Grid(8)
        h0 = make_divfree_init(grid, np.random.default_rng(3))
        q0 = make_divfree_init(grid, np.random.default_rng(4))
        maxes = []
        for dtau in (4e-3, 2e-3, 1e-3):
            cfg = SolverConfig(params=p, grid=grid, dtau=dtau, tau_end=0.4)
            res = run(cfg, LinState(h0.copy(), q0.copy(), 0.0))
            rep = energy_balance_check(res.taus, res.energy, res.energy_inner,
                                       skip_tau=0.1)
            maxes.append(rep["max_rel_mismatch"])
        for big, small in zip(maxes, maxes[1:]):
            assert 0.3 <= small / big <= 0.7

    def test_zero_trajectory_balance(self):
        cfg = small_cfg(n=8, tau_end=0.02)
        st = LinState(cfg.grid.zeros_vec(), cfg.grid.zeros_vec(), 0.0)
        res = run(cfg, st)
        rep = energy_balance_check(res.taus, res.energy, res.energy_inner)
        assert rep["max_mismatch"] == 0.0


class TestManufactured:
    def test_spatial_order(self):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=1.0, mu=1.0, t_star=1.0)
        rep = manufactured_convergence(p, ns=(8, 16), tau_end=0.2)
        assert 1.7 <= rep["observed_order"] <= 2.3

    def test_time_order(self):
        p = ModelParams(a=0.25, k=0.5, a_bar=0.5, nu=1.0, mu=1.0, t_star=1.0)
        rep = manufactured_time_order(p, n=10, dtaus=(4e-3, 2e-3, 1e-3),
                                      tau_end=0.2)
        assert rep["observed_order"] >= 0.8

    def test_zero_manufactured_error_is_zero(self):
        # trivially: zero data with exactly compensating (zero) forcing
        cfg = small_cfg(n=8, tau_end=0.01, include_pressure=False,
                        project=False)
        st = LinState(cfg.grid.zeros_vec(), cfg.grid.zeros_vec(), 0.0)
        res = run(cfg, st, raw_forcing_at=lambda tau: (cfg.grid.zeros_vec(),
                                                       cfg.grid.zeros_vec()))
        assert not res.final_state.h.any()


class TestCoefficients:
    def test_tau_zero_values(self):
        p = ModelParams(a=0.5, k=1.0, a_bar=1.0, t_star=1.0)
        kap, sig, bet, gam, rho = tau_coefficients(p, 0.0)
        assert kap == 1.0 and gam == 1.0 and bet == 1.0 and rho == 1.0
        assert math.isclose(sig, p.kbar)

    def test_decay_in_tau(self):
        p = ModelParams(a=0.5, k=1.0, a_bar=1.0, t_star=1.0)
        k0 = tau_coefficients(p, 0.0)[0]
        k1 = tau_coefficients(p, 1.0)[0]
        assert math.isclose(k1 / k0, math.exp(-2.0))
