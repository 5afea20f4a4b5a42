"""Similarity change of variables between the shrinking box and the unit cube.

tau = ln(t_bar_star / (t_bar_star - t)),  y = x / sqrt(t_bar_star - t).
The box 0 <= x_i <= sqrt(t_bar_star - t) maps onto [0, 1]^3 and the blowup
time maps to tau = +infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SelfSimPoint", "phys_to_selfsim", "selfsim_to_phys",
           "decay_rate_convert"]

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class SelfSimPoint:
    tau: float
    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if not math.isfinite(self.tau) or self.tau < -_BOUNDARY_TOL:
            raise ValueError(f"tau must be finite and nonnegative, got {self.tau}")
        if np.any(y < -_BOUNDARY_TOL) or np.any(y > 1.0 + _BOUNDARY_TOL):
            raise ValueError(f"y must lie in the closed unit cube, got {y}")


def phys_to_selfsim(t_bar_star: float, t: float, x) -> SelfSimPoint:
    """Map (t, x) in the shrinking box to (tau, y) on the fixed cube."""
    s = t_bar_star - t
    if t < 0.0 or s <= 0.0:
        raise ValueError(f"need 0 <= t < t_bar_star, got t = {t}")
    x = np.asarray(x, dtype=float)
    edge = math.sqrt(s)
    if np.any(x < -_BOUNDARY_TOL * edge - _BOUNDARY_TOL) or \
            np.any(x > edge * (1.0 + _BOUNDARY_TOL) + _BOUNDARY_TOL):
        raise ValueError(f"x = {x} outside the box of edge {edge}")
    return SelfSimPoint(tau=math.log(t_bar_star / s), y=x / edge)


def selfsim_to_phys(t_bar_star: float, sp: SelfSimPoint) -> tuple[float, np.ndarray]:
    """Inverse map: t = t_bar_star (1 - e^-tau), x = y sqrt(t_bar_star - t)."""
    t = t_bar_star * (1.0 - math.exp(-sp.tau))
    edge = math.sqrt(t_bar_star - t)
    return t, sp.y * edge


def decay_rate_convert(rate_tau: float, t_bar_star: float = 1.0) -> dict:
    """Translate a tau-exponential rate into the matching time-gap power law.

    e^(-C tau) = ((t_bar_star - t)/t_bar_star)^C, so the power-law exponent in
    the gap equals the tau rate; the normalization t_bar_star^(-C) is returned
    alongside.
    """
    return {
        "gap_exponent": rate_tau,
        "normalization": t_bar_star ** (-rate_tau),
    }
