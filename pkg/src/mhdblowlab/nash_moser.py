"""Smoothing cutoffs, nonlinear residual operators, and the iteration driver.

The unknown of the iteration is a trajectory over a tau window: arrays of
shape (K+1, 3, n, n, n) for each of the two vector channels.  The nonlinear
residual of a trajectory is measured against the same IMEX step the linear
solver uses, with the quadratic blocks (background-coupling bilinears plus
the whole pressure functional) wrapped in a sharp sine-spectral cutoff whose
band N_m = n0^m widens each sweep.  Because the linearized solve injects the
previous residual through a post-projection forcing slot, the new residual
telescopes exactly to the cutoff tail of the coupling terms plus the
projected quadratic remainder, which is what drives superlinear contraction
down to the discretization floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy_monitor import hs_norm, l2_norm
from .gridops import Grid, dst3, idst3, leray_project, mode_mask
from .linsolver import (Background, LinState, SolverConfig, assemble_rhs,
                        step)

__all__ = [
    "Schedule",
    "IterationTrace",
    "smooth",
    "measure_smoothing_constants",
    "residual_operators",
    "linearized_solve_step",
    "linearized_action",
    "tame_estimate_check",
    "make_initial_guess",
    "iterate",
    "trajectory_norm",
]


# -- smoothing ----------------------------------------------------------------


def smooth(field: np.ndarray, theta: float) -> np.ndarray:
    """Sharp low-pass cutoff in the sine basis: zero every mode whose maximal
    index exceeds theta.  Exact identity (same array copy) once theta covers
    the whole band."""
    n = field.shape[-1]
    if theta >= n:
        return field.copy()
    keep = mode_mask(n, theta)
    hat = dst3(field)
    hat *= keep
    return idst3(hat)


def _random_band_field(grid: Grid, rng: np.random.Generator,
                       lo: int, hi: int) -> np.ndarray:
    """Random field whose sine modes satisfy lo < max-index <= hi."""
    n = grid.n
    keep = mode_mask(n, hi) & ~mode_mask(n, lo)
    hat = np.zeros((n, n, n))
    hat[keep] = rng.standard_normal(int(keep.sum()))
    return idst3(hat)


def measure_smoothing_constants(grid: Grid, rng: np.random.Generator,
                                thetas=(2, 4, 8, 16), orders=(0, 1, 2),
                                n_fields: int = 50) -> dict:
    """Measured constants of the three cutoff inequalities.

    For each theta the probe fields are band-limited where the corresponding
    supremum lives: inside the band for the boundedness inequality, just
    above it for the residual inequality, and across the dyadic shell for the
    theta-derivative surrogate (smooth(u, 2 theta) - smooth(u, theta))/theta.
    The derivative constant is measured against theta^(k1-k2-1), which is at
    least as strong as the required theta^((k1-k2)+ - 1).
    """
    out = {"bound": {}, "residual": {}, "derivative": {}}
    for theta in thetas:
        if 2 * theta > grid.n:
            raise ValueError(f"grid n={grid.n} too small for theta={theta}")
        # random fields probe the cutoff edge (where the k1 > k2 supremum
        # lives); the fixed lowest modes probe the k1 <= k2 supremum, which
        # sits at the bottom of the spectrum for every theta
        from .gridops import sine_mode

        probes = [_random_band_field(grid, rng, 0, theta)
                  for _ in range(n_fields)]
        probes += [sine_mode(grid, xi)
                   for xi in ((1, 1, 1), (2, 1, 1), (1, 2, 2))]
        low_norms = []      # per field: norms of u and of smooth(u, theta)
        for u in probes:
            su = smooth(u, theta)
            low_norms.append(([hs_norm(grid, u, s) for s in orders],
                              [hs_norm(grid, su, s) for s in orders]))
        shell_norms = []    # per field: norms of u, residual, dyadic derivative
        for _ in range(n_fields):
            u = _random_band_field(grid, rng, theta, min(2 * theta, grid.n))
            resid = u - smooth(u, theta)
            dth = (smooth(u, 2 * theta) - smooth(u, theta)) / theta
            shell_norms.append(([hs_norm(grid, u, s) for s in orders],
                                [hs_norm(grid, resid, s) for s in orders],
                                [hs_norm(grid, dth, s) for s in orders]))
        for k1 in orders:
            for k2 in orders:
                out["bound"][(theta, k1, k2)] = max(
                    su[k1] / (theta ** max(k1 - k2, 0) * u[k2])
                    for u, su in low_norms)
                if k1 <= k2:
                    out["residual"][(theta, k1, k2)] = max(
                        r[k1] / (theta ** (k1 - k2) * u[k2])
                        for u, r, _ in shell_norms)
                out["derivative"][(theta, k1, k2)] = max(
                    d[k1] / (theta ** (k1 - k2 - 1) * u[k2])
                    for u, _, d in shell_norms)
    return out


# -- schedule and trace ---------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Cutoff ladder N_m = n0^m with the decreasing exponent bookkeeping."""

    n0: int = 2
    m_max: int = 6
    eps0: float = 1e-3
    eps: float = 0.05
    k_top: float = 3.0
    k_bar: float = 2.0
    floor: float = 1e-8

    def __post_init__(self):
        if self.n0 <= 1:
            raise ValueError("n0 must exceed 1")
        if not (0.0 < 2.0 * self.eps0 < self.eps < 1.0):
            raise ValueError("need 0 < 2 eps0 < eps < 1")
        if not (1.0 < self.k_bar < self.k_top):
            raise ValueError("need 1 < k_bar < k_top")

    def band(self, m: int) -> int:
        return self.n0 ** m

    def exponent(self, m: int) -> float:
        return self.k_bar + (self.k_top - self.k_bar) / 2 ** m


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)
    floor: float = 1e-8
    aborted: bool = False

    def add(self, m, h_norm, q_norm, e1, e2):
        self.rows.append({"m": m, "h_norm": h_norm, "q_norm": q_norm,
                          "e1": e1, "e2": e2})

    def error_sequence(self):
        return [r["e1"] + r["e2"] for r in self.rows]

    def analyze(self) -> dict:
        """Superlinear-run bookkeeping against the discretization floor.

        Passes when some run of consecutive superlinear steps either lasts at
        least 3 steps or terminates because the error dropped to the floor.
        """
        errs = self.error_sequence()
        superlinear = [m for m in range(1, len(errs))
                       if errs[m] <= max(errs[m - 1], 1e-300) ** 1.5]
        floor_hit = next((i for i, e in enumerate(errs) if e <= self.floor),
                         None)
        runs = []
        for m in superlinear:
            if runs and runs[-1][-1] == m - 1:
                runs[-1].append(m)
            else:
                runs.append([m])
        best_run = max((len(r) for r in runs), default=0)
        passes = (floor_hit == 0) or any(
            len(r) >= 3 or errs[r[-1]] <= self.floor for r in runs)
        contraction = [math.log(errs[i + 1]) / math.log(errs[i])
                       if 0 < errs[i] < 1 and errs[i + 1] > 0 else math.nan
                       for i in range(len(errs) - 1)]
        return {
            "errors": errs,
            "superlinear_steps": superlinear,
            "longest_run": best_run,
            "floor_hit_at": floor_hit,
            "contraction_exponents": contraction,
            "passes_floor_aware_superlinearity": passes,
        }

    def to_json(self) -> dict:
        analysis = self.analyze()
        return {
            "steps": self.rows,
            "floor": self.floor,
            "aborted": self.aborted,
            "superlinear_until": analysis["floor_hit_at"],
            "analysis": {k: v for k, v in analysis.items() if k != "errors"},
        }


# -- trajectory machinery --------------------------------------------------------


def _nl_rhs(cfg: SolverConfig, tau: float, h: np.ndarray, q: np.ndarray,
            band: int):
    """Nonlinear right-hand side with the quadratic block cutoff to the band.

    Linear terms with closed-form coefficients stay unwrapped; the coupling
    bilinears (single-counted) and the whole pressure functional pass through
    the sharp cutoff.
    """
    grid, p = cfg.grid, cfg.params
    lin_h, lin_q = assemble_rhs(grid, p, tau, h, q, include_pressure=False)
    full_h, full_q = assemble_rhs(grid, p, tau, h, q, w=h, b=q,
                                  include_pressure=True, bilinear_weight=0.5)
    return (lin_h + smooth(full_h - lin_h, band),
            lin_q + smooth(full_q - lin_q, band))


def _nl_step(cfg: SolverConfig, tau: float, h: np.ndarray, q: np.ndarray,
             band: int):
    """One nonlinear IMEX advance matching the linear stepper's structure."""
    from .gridops import diffusion_solve

    grid, p = cfg.grid, cfg.params
    rhs_h, rhs_q = _nl_rhs(cfg, tau, h, q, band)
    h_star = h + cfg.dtau * rhs_h
    q_star = q + cfg.dtau * rhs_q
    h_new = np.stack([diffusion_solve(grid, h_star[i], cfg.dtau * p.nu)
                      for i in range(3)])
    q_new = np.stack([diffusion_solve(grid, q_star[i], cfg.dtau * p.mu)
                      for i in range(3)])
    if cfg.project:
        h_new = leray_project(grid, h_new)
        q_new = leray_project(grid, q_new)
    return h_new, q_new


def residual_operators(cfg: SolverConfig, traj_h: np.ndarray,
                       traj_q: np.ndarray, band: int):
    """Slot residuals of a trajectory under the cutoff-band nonlinear flow.

    E[k] = (u[k+1] - nonlinear_step(u[k])) / dtau for k = 0..K-1; the zero
    trajectory has zero residual.
    """
    K = traj_h.shape[0] - 1
    e1 = np.empty_like(traj_h[:-1])
    e2 = np.empty_like(traj_q[:-1])
    for k in range(K):
        tau = k * cfg.dtau
        h_pred, q_pred = _nl_step(cfg, tau, traj_h[k], traj_q[k], band)
        e1[k] = (traj_h[k + 1] - h_pred) / cfg.dtau
        e2[k] = (traj_q[k + 1] - q_pred) / cfg.dtau
    return e1, e2


def linearized_solve_step(cfg: SolverConfig, bg_h: np.ndarray,
                          bg_q: np.ndarray, e1: np.ndarray, e2: np.ndarray,
                          init_h=None, init_q=None):
    """Integrate the linearized system along the frozen trajectory background
    with the residual injected as a post-projection forcing.

    Zero initial data unless an explicit increment start is supplied.  The
    injected corrections are slot residuals, hence divergence-free, so the
    increments stay divergence-free after every step.
    """
    grid = cfg.grid
    K = e1.shape[0]
    out_h = np.zeros((K + 1,) + bg_h.shape[1:])
    out_q = np.zeros_like(out_h)
    if init_h is not None:
        out_h[0] = init_h
        out_q[0] = init_q
    st = LinState(out_h[0].copy(), out_q[0].copy(), 0.0)
    for k in range(K):
        bg = Background(bg_h[k], bg_q[k], radius=math.inf)
        st = step(st, cfg, bg, post_forcing=(-e1[k], -e2[k]))
        out_h[k + 1] = st.h
        out_q[k + 1] = st.q
    return out_h, out_q


def linearized_action(cfg: SolverConfig, bg_h, bg_q, inc_h, inc_q):
    """Forcing-slot action of the linearized flow on an increment trajectory:
    L[k] = (inc[k+1] - linear_step(inc[k])) / dtau."""
    K = inc_h.shape[0] - 1
    a1 = np.empty_like(inc_h[:-1])
    a2 = np.empty_like(inc_q[:-1])
    for k in range(K):
        bg = Background(bg_h[k], bg_q[k], radius=math.inf)
        st = LinState(inc_h[k].copy(), inc_q[k].copy(), k * cfg.dtau)
        nxt = step(st, cfg, bg)
        a1[k] = (inc_h[k + 1] - nxt.h) / cfg.dtau
        a2[k] = (inc_q[k + 1] - nxt.q) / cfg.dtau
    return a1, a2


def tame_estimate_check(cfg: SolverConfig, bg_h, bg_q, inc_h, inc_q,
                        band: int) -> dict:
    """Quadratic remainder of the update and its band-squared bound.

    The remainder is assembled slot by slot from the difference between the
    linearized right-hand side and the increment of the cutoff nonlinear
    right-hand side, pushed through the implicit solve and projection; with
    the full band it reduces to the pure single-counted quadratic block.
    """
    from .gridops import diffusion_solve

    grid, p = cfg.grid, cfg.params
    K = inc_h.shape[0] - 1
    r1 = np.empty_like(inc_h[:-1])
    r2 = np.empty_like(inc_q[:-1])
    for k in range(K):
        tau = k * cfg.dtau
        lin_h, lin_q = assemble_rhs(
            grid, p, tau, inc_h[k], inc_q[k], w=bg_h[k], b=bg_q[k],
            include_pressure=cfg.include_pressure, bilinear_weight=1.0)
        nl_new = _nl_rhs(cfg, tau, bg_h[k] + inc_h[k], bg_q[k] + inc_q[k], band)
        nl_old = _nl_rhs(cfg, tau, bg_h[k], bg_q[k], band)
        gap_h = lin_h - (nl_new[0] - nl_old[0])
        gap_q = lin_q - (nl_new[1] - nl_old[1])
        gap_h = np.stack([diffusion_solve(grid, gap_h[i], cfg.dtau * p.nu)
                          for i in range(3)])
        gap_q = np.stack([diffusion_solve(grid, gap_q[i], cfg.dtau * p.mu)
                          for i in range(3)])
        if cfg.project:
            gap_h = leray_project(grid, gap_h)
            gap_q = leray_project(grid, gap_q)
        r1[k] = gap_h
        r2[k] = gap_q
    r1_norm = trajectory_norm(cfg, r1)
    r2_norm = trajectory_norm(cfg, r2)
    h_norm = trajectory_norm(cfg, inc_h)
    q_norm = trajectory_norm(cfg, inc_q)
    denom = band ** 2 * (h_norm ** 2 + q_norm ** 2)
    return {
        "r1": r1, "r2": r2,
        "r1_norm": r1_norm, "r2_norm": r2_norm,
        "h_norm": h_norm, "q_norm": q_norm,
        "bound_const": (r1_norm + r2_norm) / denom if denom > 0 else 0.0,
    }


def trajectory_norm(cfg: SolverConfig, traj: np.ndarray, s: int = 1) -> float:
    """Sup-over-slots surrogate norm: spatial H^s plus a forward-difference
    time-derivative l2 term."""
    grid = cfg.grid
    best = 0.0
    K = traj.shape[0]
    for k in range(K):
        space = hs_norm(grid, traj[k], s)
        if K > 1:
            j = min(k, K - 2)
            dt_term = l2_norm(grid, (traj[j + 1] - traj[j]) / cfg.dtau)
        else:
            dt_term = 0.0
        best = max(best, math.hypot(space, dt_term))
    return best


# -- the iteration ---------------------------------------------------------------


def make_initial_guess(cfg: SolverConfig, rng: np.random.Generator,
                       eps0: float):
    """Divergence-free nonzero starting trajectory of size eps0: a random
    curl-built state evolved by the homogeneous linearized flow, so the
    starting residual reflects only the cutoff bookkeeping, not raw dynamics."""
    from .linsolver import make_divfree_init

    grid = cfg.grid
    K = int(round(cfg.tau_end / cfg.dtau))
    h0 = make_divfree_init(grid, rng, amplitude=eps0, max_mode=1)
    q0 = make_divfree_init(grid, rng, amplitude=eps0, max_mode=1)
    traj_h = np.zeros((K + 1, 3, grid.n, grid.n, grid.n))
    traj_q = np.zeros_like(traj_h)
    traj_h[0] = h0
    traj_q[0] = q0
    st = LinState(h0.copy(), q0.copy(), 0.0)
    for k in range(K):
        st = step(st, cfg, None)
        traj_h[k + 1] = st.h
        traj_q[k + 1] = st.q
    return traj_h, traj_q


def iterate(cfg: SolverConfig, sched: Schedule,
            rng: np.random.Generator | None = None,
            initial=None) -> IterationTrace:
    """Run the cutoff-ladder iteration: solve, correct, re-measure.

    Residuals at sweep m are measured with the band N_m = n0^m; each sweep
    integrates the linearized system around the current trajectory with the
    previous residual injected, then adds the increment.  Aborts with a
    partial trace if the error grows past 1/eps0 times its starting value.
    """
    if initial is None:
        if rng is None:
            raise ValueError("need an rng when no initial guess is supplied")
        traj_h, traj_q = make_initial_guess(cfg, rng, sched.eps0)
    else:
        traj_h, traj_q = initial
        traj_h = traj_h.copy()
        traj_q = traj_q.copy()

    trace = IterationTrace(floor=sched.floor)
    e1, e2 = residual_operators(cfg, traj_h, traj_q, sched.band(1))
    e1n, e2n = trajectory_norm(cfg, e1), trajectory_norm(cfg, e2)
    trace.add(0, trajectory_norm(cfg, traj_h), trajectory_norm(cfg, traj_q),
              e1n, e2n)
    start_err = e1n + e2n

    for m in range(1, sched.m_max + 1):
        if e1n + e2n <= sched.floor:
            break
        inc_h, inc_q = linearized_solve_step(cfg, traj_h, traj_q, e1, e2)
        traj_h += inc_h
        traj_q += inc_q
        band_next = sched.band(m + 1)
        e1, e2 = residual_operators(cfg, traj_h, traj_q, band_next)
        e1n, e2n = trajectory_norm(cfg, e1), trajectory_norm(cfg, e2)
        trace.add(m, trajectory_norm(cfg, inc_h), trajectory_norm(cfg, inc_q),
                  e1n, e2n)
        if not math.isfinite(e1n + e2n) or \
                e1n + e2n > max(start_err, sched.eps0) / sched.eps0:
            trace.aborted = True
            break
    return trace
