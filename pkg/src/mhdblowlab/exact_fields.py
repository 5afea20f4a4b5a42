"""Closed-form evaluation of the singular flow family in floating point.

The family is parameterized by (a, k, a_bar, nu, mu, t_star).  Velocity blows up
like 1/(t_star - t) while the magnetic field stays bounded; fractional time
powers (t_star - t)**(2a) are evaluated through exp/log, so every operation
guards t < t_star.  Exactness claims about these fields live in ``timepoly``;
this module is the float-arithmetic counterpart used by the grid solver and by
cross-consistency tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "ModelParams",
    "ValidatedParams",
    "InvalidParamsError",
    "validate_params",
    "eval_velocity",
    "eval_magnetic",
    "eval_pressure",
    "grad_velocity",
    "grad_magnetic",
    "vorticity",
    "initial_data",
    "cyl_basis",
    "cyl_to_cart",
    "cart_to_cyl",
    "in_domain",
]


@dataclass(frozen=True)
class ModelParams:
    """Constants governing the closed-form fields.

    ``t_bar_star`` is the blowup time of the shrinking box used by the
    similarity coordinates; it defaults to ``t_star``.
    """

    a: float
    k: float
    a_bar: float
    nu: float = 0.0
    mu: float = 0.0
    t_star: float = 1.0
    t_bar_star: float | None = None

    def __post_init__(self):
        if self.t_bar_star is None:
            object.__setattr__(self, "t_bar_star", float(self.t_star))

    @property
    def kbar(self) -> float:
        """Azimuthal magnetic coupling coefficient 2*a_bar*k/(4a+1)."""
        return 2.0 * self.a_bar * self.k / (4.0 * self.a + 1.0)


class InvalidParamsError(ValueError):
    """Raised when a parameter set violates its admissibility constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ValidatedParams:
    """Wrapper certifying that ``params`` passed :func:`validate_params`."""

    params: ModelParams
    mode: str


def _existence_violations(p: ModelParams):
    out = []
    if p.a in (0.0, -0.25):
        out.append("a ∈ excluded set")
    if p.k == 0.0:
        out.append("k = 0")
    if p.a_bar == 0.0:
        out.append("a_bar = 0")
    if not p.t_star > 0.0:
        out.append("t_star ≤ 0")
    if p.nu < 0.0:
        out.append("nu < 0")
    if p.mu < 0.0:
        out.append("mu < 0")
    if not p.t_bar_star > 0.0:
        out.append("t_bar_star ≤ 0")
    return out


def _stability_violations(p: ModelParams, s: int, c_r: float):
    out = _existence_violations(p)
    if not 0.0 < p.a <= 0.5:
        out.append("a ∉ (0,1/2]")
    if not 0.0 < p.a_bar <= 1.0:
        out.append("a_bar ∉ (0,1]")
    if not 0.0 < p.k <= 1.0:
        out.append("k ∉ (0,1]")
    if not out:
        from .energy_monitor import coefficient_conditions

        report = coefficient_conditions(p, s=s, c_r_estimate=c_r)
        for name, entry in report["conditions"].items():
            if not entry["positive"]:
                out.append(f"coefficient condition {name} ≤ 0 "
                           f"(value {entry['value']:.6g})")
    return out


def validate_params(p: ModelParams, mode: str = "existence", *,
                    s: int = 2, c_r_estimate: float = 0.1) -> ValidatedParams:
    """Check admissibility of ``p`` and return a validated wrapper.

    ``mode`` is "existence" (the family is well defined) or "stability" (the
    parameter window of the perturbation analysis, including the dissipation
    coefficient-positivity conditions from ``energy_monitor``).  Raises
    :class:`InvalidParamsError` listing every violated constraint.
    """
    if mode == "existence":
        violations = _existence_violations(p)
    elif mode == "stability":
        violations = _stability_violations(p, s, c_r_estimate)
    else:
        raise ValueError(f"unknown validation mode {mode!r}")
    if violations:
        raise InvalidParamsError(violations)
    return ValidatedParams(params=p, mode=mode)


def _gap(p: ModelParams, t: float) -> float:
    s = p.t_star - t
    if s <= 0.0:
        raise ValueError(f"t = {t} is not below t_star = {p.t_star}")
    return s


def eval_velocity(p: ModelParams, t: float, x) -> np.ndarray:
    """Velocity at (t, x); linear-in-x with a swirling plane component."""
    s = _gap(p, t)
    x = np.asarray(x, dtype=float)
    s2a = s ** (2.0 * p.a)
    return np.array([
        p.a * x[0] / s + p.k * x[1] * s2a,
        p.a * x[1] / s - p.k * x[0] * s2a,
        -2.0 * p.a * x[2] / s,
    ])


def eval_magnetic(p: ModelParams, t: float, x) -> np.ndarray:
    """Magnetic field at (t, x); stays bounded as t approaches t_star."""
    s = _gap(p, t)
    x = np.asarray(x, dtype=float)
    sw = p.kbar * s ** (2.0 * p.a + 1.0)
    return np.array([
        p.a_bar * x[0] + sw * x[1] * x[2],
        p.a_bar * x[1] - sw * x[0] * x[2],
        -2.0 * p.a_bar * x[2],
    ])


def eval_pressure(p: ModelParams, t: float, x) -> float:
    """Pressure at (t, x) for the closed-form pair (velocity, magnetic)."""
    s = _gap(p, t)
    x = np.asarray(x, dtype=float)
    r2 = x[0] ** 2 + x[1] ** 2
    z2 = x[2] ** 2
    c = (p.a_bar * p.k / (4.0 * p.a + 1.0)) ** 2 * s ** (2.0 * (2.0 * p.a + 1.0))
    return float(
        0.5 * r2 * (p.k ** 2 * s ** (4.0 * p.a)
                    - p.a * (p.a + 1.0) / s ** 2
                    - 8.0 * c * z2)
        + z2 * (p.a * (1.0 - 2.0 * p.a) / s ** 2 - 2.0 * c * r2)
    )


def grad_velocity(p: ModelParams, t: float) -> np.ndarray:
    """Velocity Jacobian J[i, j] = d v_i / d x_j; independent of x, trace-free."""
    s = _gap(p, t)
    s2a = s ** (2.0 * p.a)
    return np.array([
        [p.a / s, p.k * s2a, 0.0],
        [-p.k * s2a, p.a / s, 0.0],
        [0.0, 0.0, -2.0 * p.a / s],
    ])


def grad_magnetic(p: ModelParams, t: float, x) -> np.ndarray:
    """Magnetic Jacobian J[i, j] = d H_i / d x_j; affine in x, trace-free."""
    s = _gap(p, t)
    x = np.asarray(x, dtype=float)
    sw = p.kbar * s ** (2.0 * p.a + 1.0)
    return np.array([
        [p.a_bar, sw * x[2], sw * x[1]],
        [-sw * x[2], p.a_bar, -sw * x[0]],
        [0.0, 0.0, -2.0 * p.a_bar],
    ])


def vorticity(p: ModelParams, t: float) -> np.ndarray:
    """Curl of the velocity: spatially uniform, (0, 0, -2k (t_star - t)^(2a)).

    The plane swirl (k x2, -k x1) rotates clockwise, so its curl points in
    the negative x3 direction; this matches the central-difference curl of
    :func:`eval_velocity` exactly.
    """
    s = _gap(p, t)
    return np.array([0.0, 0.0, -2.0 * p.k * s ** (2.0 * p.a)])


def initial_data(p: ModelParams, x) -> tuple[np.ndarray, np.ndarray]:
    """Velocity and magnetic field at t = 0."""
    return eval_velocity(p, 0.0, x), eval_magnetic(p, 0.0, x)


def cyl_basis(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal triple (e_r, e_theta, e_z) at x; requires r > 0.

    e_theta = (x2/r, -x1/r, 0): the swirl direction of the velocity family.
    """
    x = np.asarray(x, dtype=float)
    r = math.hypot(x[0], x[1])
    if r == 0.0:
        raise ValueError("cylindrical basis undefined on the x3 axis (r = 0)")
    e_r = np.array([x[0] / r, x[1] / r, 0.0])
    e_th = np.array([x[1] / r, -x[0] / r, 0.0])
    e_z = np.array([0.0, 0.0, 1.0])
    return e_r, e_th, e_z


def cyl_to_cart(x, c) -> np.ndarray:
    """Vector with cylindrical components c = (c_r, c_theta, c_z) at point x."""
    e_r, e_th, e_z = cyl_basis(x)
    c = np.asarray(c, dtype=float)
    return c[0] * e_r + c[1] * e_th + c[2] * e_z


def cart_to_cyl(x, v) -> np.ndarray:
    """Cylindrical components (c_r, c_theta, c_z) of the vector v at point x."""
    e_r, e_th, e_z = cyl_basis(x)
    v = np.asarray(v, dtype=float)
    return np.array([v @ e_r, v @ e_th, v @ e_z])


def in_domain(t_bar_star: float, t: float, x, tol: float = 0.0) -> bool:
    """True iff every coordinate of x lies in [0, sqrt(t_bar_star - t)]."""
    s = t_bar_star - t
    if s <= 0.0:
        raise ValueError(f"t = {t} is not below t_bar_star = {t_bar_star}")
    edge = math.sqrt(s)
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -tol) and np.all(x <= edge + tol))
