"""Norms, decay-rate fitting, energy bookkeeping and coefficient conditions.

All norms are composite-trapezoid discretizations on the unit cube; with zero
boundary data the trapezoid rule reduces to h^3 times the interior sum.
Sobolev-type norms stack pure-axis repeated centered differences, mirroring
the derivative combinations the decay estimates control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_fields import ModelParams
from .gridops import Grid, dx, laplacian_apply, poisson_solve_dirichlet

__all__ = [
    "l2_norm",
    "l2_inner",
    "hs_seminorm",
    "hs_norm",
    "DecayFit",
    "fit_decay",
    "trim_positive_window",
    "energy_balance_check",
    "poincare_constant",
    "coefficient_conditions",
]


def l2_norm(grid: Grid, field: np.ndarray) -> float:
    """Trapezoid l2 norm; accepts scalar (n,n,n) or stacked (..., n,n,n)."""
    return math.sqrt(grid.h ** 3 * float(np.sum(field * field)))


def l2_inner(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    return grid.h ** 3 * float(np.sum(u * v))


def _axis_power_diff(grid: Grid, u: np.ndarray, axis: int, order: int) -> np.ndarray:
    out = u
    for _ in range(order):
        out = dx(grid, out, axis)
    return out


def hs_seminorm(grid: Grid, field: np.ndarray, s: int) -> float:
    """sqrt of the summed squares of the pure s-th axis differences."""
    comps = field if field.ndim == 4 else field[None]
    total = 0.0
    for comp in comps:
        for axis in range(3):
            total += l2_norm(grid, _axis_power_diff(grid, comp, axis, s)) ** 2
    return math.sqrt(total)


def hs_norm(grid: Grid, field: np.ndarray, s: int) -> float:
    """Discrete H^s norm: l2 plus pure-axis difference seminorms up to order s."""
    if s not in (0, 1, 2):
        raise ValueError(f"s must be 0, 1 or 2, got {s}")
    total = l2_norm(grid, field) ** 2
    for order in range(1, s + 1):
        total += hs_seminorm(grid, field, order) ** 2
    return math.sqrt(total)


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    window: tuple[float, float]
    goodness: float
    n_samples: int
    degenerate: bool = False


def fit_decay(taus, values, window=None) -> DecayFit:
    """Least-squares exponential rate: line fit of ln(value) against tau.

    Returns rate = -slope and the coefficient of determination.  A window
    containing nonpositive values yields the degenerate rate = +inf flag; use
    :func:`trim_positive_window` to clip a series that underflows.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = (0.5, float(taus[-1]))
    lo, hi = window
    if hi is None:
        hi = float(taus[-1])
    mask = (taus >= lo) & (taus <= hi)
    if mask.sum() < 5:
        raise ValueError(f"need at least 5 samples in window [{lo}, {hi}], "
                         f"got {int(mask.sum())}")
    sub_t = taus[mask]
    sub_v = values[mask]
    if np.any(sub_v <= 0.0):
        return DecayFit(rate=math.inf, intercept=math.nan, window=(lo, hi),
                        goodness=0.0, n_samples=int(mask.sum()), degenerate=True)
    logs = np.log(sub_v)
    slope, intercept = np.polyfit(sub_t, logs, 1)
    pred = slope * sub_t + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    goodness = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    return DecayFit(rate=-float(slope), intercept=float(intercept),
                    window=(lo, hi), goodness=goodness,
                    n_samples=int(mask.sum()))


def trim_positive_window(taus, values, lo: float = 0.5,
                         floor: float = 1e-140) -> tuple[float, float]:
    """Largest window [lo, hi] on which the series stays above the floor.

    The floor keeps squared quantities clear of the subnormal range, where
    exponential decay flattens into rounding artifacts.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values >= floor
    hi = lo
    for t, good in zip(taus, ok):
        if t < lo:
            continue
        if not good:
            break
        hi = t
    if hi <= lo:
        raise ValueError("series drops below the floor before the window opens")
    return (lo, float(hi))


def energy_balance_check(taus, energy, inner, skip_tau: float = 0.0) -> dict:
    """Mismatch between the centered-difference energy derivative and the
    recorded inner product <state, rhs> at interior record times.

    ``skip_tau`` drops an initial settling window (stiff start-up modes whose
    decay the step size cannot resolve).  The relative mismatch divides by the
    local energy, which makes runs with different step sizes comparable at a
    fixed time: the first-order scheme shifts the whole energy baseline by a
    rate-resolution factor that cancels in the ratio.
    """
    taus = np.asarray(taus, dtype=float)
    energy = np.asarray(energy, dtype=float)
    inner = np.asarray(inner, dtype=float)
    keep = taus >= skip_tau
    taus, energy, inner = taus[keep], energy[keep], inner[keep]
    if len(taus) < 3:
        raise ValueError("need at least 3 records past the settling window")
    dedt = (energy[2:] - energy[:-2]) / (taus[2:] - taus[:-2])
    mismatch = np.abs(dedt - inner[1:-1])
    mid_energy = energy[1:-1]
    rel = np.where(mid_energy > 0.0, mismatch / np.maximum(mid_energy, 1e-300),
                   0.0)
    return {
        "taus": taus[1:-1],
        "mismatch": mismatch,
        "max_mismatch": float(mismatch.max()),
        "rel_mismatch": rel,
        "max_rel_mismatch": float(rel.max()),
        "initial_energy": float(energy[0]),
    }


def poincare_constant(grid: Grid, tol: float = 1e-12,
                      max_iter: int = 500) -> dict:
    """Smallest Dirichlet-Laplacian eigenvalue by inverse iteration.

    The Poincare constant is 1/lambda1; the limit of lambda1 as the grid
    refines is 3 pi^2 on the unit cube.
    """
    u = np.ones((grid.n,) * 3)
    u /= l2_norm(grid, u)
    lam = 0.0
    for it in range(1, max_iter + 1):
        v = -poisson_solve_dirichlet(grid, u)
        v /= l2_norm(grid, v)
        lam_new = -l2_inner(grid, v, laplacian_apply(grid, v)) / l2_inner(grid, v, v)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            u = v
            break
        lam, u = lam_new, v
    else:
        raise RuntimeError(f"inverse iteration did not settle in {max_iter} steps")
    return {"lambda1": lam, "poincare_constant": 1.0 / lam,
            "iterations": it, "eigenvector": u}


def coefficient_conditions(p: ModelParams, s: int = 2,
                           c_r_estimate: float = 0.1) -> dict:
    """The eight dissipation positivity margins behind the decay estimates.

    Four act at the l2 level and four at the H^s level; every margin must be
    strictly positive.  The constant absorbed from the background ball is not
    computable and enters as the user-supplied estimate.
    """
    if c_r_estimate < 0.0:
        raise ValueError("c_r_estimate must be nonnegative")
    a, nu, mu = p.a, p.nu, p.mu
    c = c_r_estimate
    slope = (a - 0.5) * s + 0.75 - c
    values = {
        "l2_h_plane": 3 * nu + a - 1.75 - c,
        "l2_h_axis": 3 * nu - 2 * a - 0.5 - c,
        "l2_q_plane": 3 * mu - 1.25 - a - c,
        "l2_q_axis": 3 * mu - 1.25 + 2 * a - c,
        "hs_h_plane": 3 * nu + 0.5 * a + slope,
        "hs_h_axis": 3 * nu - 2.5 * a + slope,
        "hs_q_plane": 3 * mu - 1.5 * a + slope,
        "hs_q_axis": 3 * mu + 1.5 * a + slope,
    }
    conditions = {name: {"value": val, "positive": val > 0.0}
                  for name, val in values.items()}
    return {
        "conditions": conditions,
        "all_positive": all(e["positive"] for e in conditions.values()),
        "gates": {
            "a_below_min_dissipation": 0.0 < a < min(nu, mu),
            "a_in_stability_range": 0.0 < a <= 0.5,
        },
        "s": s,
        "c_r_estimate": c_r_estimate,
    }
