"""Exact algebra for space polynomials with time-power coefficients.

Elements are finite sums  c * (T - t)^p * x1^i x2^j x3^l  with c, p rational.
The ring is closed under the differential operators of incompressible MHD
(d/dt, d/dx_i, grad, div, curl, Laplacian, advection), which makes residuals
of the closed-form flow family computable bit-exactly: a residual is zero iff
its canonical term dictionary is empty.

Everything here is pure ``fractions.Fraction`` arithmetic; no floats touch the
certification path.  ``TPoly.eval`` bridges to float for cross-checks against
``exact_fields``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

__all__ = [
    "Frac",
    "TPoly",
    "RationalParams",
    "grad",
    "divergence",
    "curl",
    "laplacian",
    "advect",
    "dot",
    "cross",
    "vec_add",
    "vec_sub",
    "vec_scale",
    "vec_is_zero",
    "lorentz_force",
    "velocity_field",
    "magnetic_field",
    "pressure_field",
    "scale_field",
    "momentum_residual_fields",
    "induction_residual_fields",
    "momentum_residual",
    "induction_residual",
    "divergence_residuals",
    "verify_pressure_gradients",
    "verify_scaling_invariance",
    "verify_derivation_constants",
]

Frac = Fraction


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    raise TypeError(f"expected an exact rational, got {type(x).__name__}")


class TPoly:
    """Canonical polynomial: {(i, j, l): {p: c}} with no zero entries stored."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        canon: dict[tuple[int, int, int], dict[Fraction, Fraction]] = {}
        if terms:
            for mono, coeffs in terms.items():
                mono = (int(mono[0]), int(mono[1]), int(mono[2]))
                if min(mono) < 0:
                    raise ValueError(f"negative monomial power {mono}")
                bucket: dict[Fraction, Fraction] = {}
                for p, c in coeffs.items():
                    p = _frac(p)
                    c = _frac(c)
                    if c != 0:
                        bucket[p] = bucket.get(p, Fraction(0)) + c
                bucket = {p: c for p, c in bucket.items() if c != 0}
                if bucket:
                    canon[mono] = bucket
        self.terms = canon

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls) -> "TPoly":
        return cls()

    @classmethod
    def term(cls, c, mono=(0, 0, 0), p=0) -> "TPoly":
        """Single term c * (T-t)^p * x^mono."""
        return cls({tuple(mono): {_frac(p): _frac(c)}})

    @classmethod
    def x(cls, axis: int) -> "TPoly":
        mono = [0, 0, 0]
        mono[axis] = 1
        return cls.term(1, mono)

    # -- ring structure ----------------------------------------------------

    def __add__(self, other: "TPoly") -> "TPoly":
        out = {m: dict(cs) for m, cs in self.terms.items()}
        for m, cs in other.terms.items():
            tgt = out.setdefault(m, {})
            for p, c in cs.items():
                tgt[p] = tgt.get(p, Fraction(0)) + c
        return TPoly(out)

    def __neg__(self) -> "TPoly":
        return TPoly({m: {p: -c for p, c in cs.items()}
                      for m, cs in self.terms.items()})

    def __sub__(self, other: "TPoly") -> "TPoly":
        return self + (-other)

    def __mul__(self, other) -> "TPoly":
        if not isinstance(other, TPoly):
            return self.scale(other)
        out: dict[tuple[int, int, int], dict[Fraction, Fraction]] = {}
        for m1, cs1 in self.terms.items():
            for m2, cs2 in other.terms.items():
                m = (m1[0] + m2[0], m1[1] + m2[1], m1[2] + m2[2])
                tgt = out.setdefault(m, {})
                for p1, c1 in cs1.items():
                    for p2, c2 in cs2.items():
                        p = p1 + p2
                        tgt[p] = tgt.get(p, Fraction(0)) + c1 * c2
        return TPoly(out)

    __rmul__ = __mul__

    def scale(self, c, p=0) -> "TPoly":
        """Multiply by the scalar c * (T-t)^p."""
        c = _frac(c)
        p = _frac(p)
        if c == 0:
            return TPoly.zero()
        return TPoly({m: {q + p: cc * c for q, cc in cs.items()}
                      for m, cs in self.terms.items()})

    # -- calculus ----------------------------------------------------------

    def ddt(self) -> "TPoly":
        """d/dt: each coefficient c (T-t)^p differentiates to -c p (T-t)^(p-1)."""
        out = {}
        for m, cs in self.terms.items():
            bucket = {}
            for p, c in cs.items():
                if p != 0:
                    bucket[p - 1] = bucket.get(p - 1, Fraction(0)) - c * p
            if bucket:
                out[m] = bucket
        return TPoly(out)

    def ddx(self, axis: int) -> "TPoly":
        out = {}
        for m, cs in self.terms.items():
            n = m[axis]
            if n == 0:
                continue
            mono = list(m)
            mono[axis] = n - 1
            mono = tuple(mono)
            tgt = out.setdefault(mono, {})
            for p, c in cs.items():
                tgt[p] = tgt.get(p, Fraction(0)) + c * n
        return TPoly(out)

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other) -> bool:
        return isinstance(other, TPoly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset((m, frozenset(cs.items()))
                              for m, cs in self.terms.items()))

    def eval(self, t_star: float, t: float, x) -> float:
        """Float value at (t, x) for a concrete blowup time t_star."""
        s = float(t_star) - float(t)
        if s <= 0.0:
            raise ValueError("t must lie below t_star")
        total = 0.0
        for (i, j, l), cs in self.terms.items():
            xm = (x[0] ** i) * (x[1] ** j) * (x[2] ** l)
            for p, c in cs.items():
                total += float(c) * s ** float(p) * xm
        return total

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m in sorted(self.terms):
            for p in sorted(self.terms[m]):
                c = self.terms[m][p]
                factors = [f"({c})"]
                if p != 0:
                    factors.append(f"(T-t)^({p})")
                for axis, n in enumerate(m):
                    if n == 1:
                        factors.append(f"x{axis + 1}")
                    elif n > 1:
                        factors.append(f"x{axis + 1}^{n}")
                parts.append("*".join(factors))
        return " + ".join(parts)

    __repr__ = __str__


# -- vector helpers ---------------------------------------------------------

Vec = tuple[TPoly, TPoly, TPoly]


def vec_add(u: Vec, w: Vec) -> Vec:
    return (u[0] + w[0], u[1] + w[1], u[2] + w[2])


def vec_sub(u: Vec, w: Vec) -> Vec:
    return (u[0] - w[0], u[1] - w[1], u[2] - w[2])


def vec_scale(u: Vec, c, p=0) -> Vec:
    return (u[0].scale(c, p), u[1].scale(c, p), u[2].scale(c, p))


def vec_is_zero(u: Vec) -> bool:
    return all(f.is_zero() for f in u)


def grad(f: TPoly) -> Vec:
    return (f.ddx(0), f.ddx(1), f.ddx(2))


def divergence(u: Vec) -> TPoly:
    return u[0].ddx(0) + u[1].ddx(1) + u[2].ddx(2)


def curl(u: Vec) -> Vec:
    return (
        u[2].ddx(1) - u[1].ddx(2),
        u[0].ddx(2) - u[2].ddx(0),
        u[1].ddx(0) - u[0].ddx(1),
    )


def laplacian(f: TPoly) -> TPoly:
    return f.ddx(0).ddx(0) + f.ddx(1).ddx(1) + f.ddx(2).ddx(2)


def advect(u: Vec, w: Vec) -> Vec:
    """(u . grad) w, componentwise."""
    return tuple(u[0] * w[i].ddx(0) + u[1] * w[i].ddx(1) + u[2] * w[i].ddx(2)
                 for i in range(3))


def dot(u: Vec, w: Vec) -> TPoly:
    return u[0] * w[0] + u[1] * w[1] + u[2] * w[2]


def cross(u: Vec, w: Vec) -> Vec:
    return (
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    )


def lorentz_force(h: Vec) -> Vec:
    """(curl H) x H.  Equal to (H . grad)H - grad(|H|^2 / 2); the identity is
    exercised by the test suite on random polynomial fields."""
    return cross(curl(h), h)


# -- the closed-form family ---------------------------------------------------


@dataclass(frozen=True)
class RationalParams:
    """Exact-rational parameter set for the certification path."""

    a: Fraction
    k: Fraction
    a_bar: Fraction
    nu: Fraction = Fraction(0)
    mu: Fraction = Fraction(0)
    t_star: Fraction = Fraction(1)

    def __post_init__(self):
        for name in ("a", "k", "a_bar", "nu", "mu", "t_star"):
            object.__setattr__(self, name, _frac(getattr(self, name)))
        bad = []
        if self.a in (Fraction(0), Fraction(-1, 4)):
            bad.append("a ∈ excluded set")
        if self.k == 0:
            bad.append("k = 0")
        if self.a_bar == 0:
            bad.append("a_bar = 0")
        if self.t_star <= 0:
            bad.append("t_star ≤ 0")
        if bad:
            raise ValueError("; ".join(bad))

    @property
    def kbar(self) -> Fraction:
        return 2 * self.a_bar * self.k / (4 * self.a + 1)


def velocity_field(rp: RationalParams) -> Vec:
    a, k = rp.a, rp.k
    two_a = 2 * a
    return (
        TPoly.term(a, (1, 0, 0), -1) + TPoly.term(k, (0, 1, 0), two_a),
        TPoly.term(a, (0, 1, 0), -1) - TPoly.term(k, (1, 0, 0), two_a),
        TPoly.term(-2 * a, (0, 0, 1), -1),
    )


def magnetic_field(rp: RationalParams) -> Vec:
    ab = rp.a_bar
    sw = rp.kbar
    p = 2 * rp.a + 1
    return (
        TPoly.term(ab, (1, 0, 0)) + TPoly.term(sw, (0, 1, 1), p),
        TPoly.term(ab, (0, 1, 0)) - TPoly.term(sw, (1, 0, 1), p),
        TPoly.term(-2 * ab, (0, 0, 1)),
    )


def pressure_field(rp: RationalParams) -> TPoly:
    a, k, ab = rp.a, rp.k, rp.a_bar
    c = (ab * k / (4 * a + 1)) ** 2
    p_sw = 2 * (2 * a + 1)
    r2_half = [((2, 0, 0), Fraction(1, 2)), ((0, 2, 0), Fraction(1, 2))]
    out = TPoly.zero()
    for mono, w in r2_half:
        out = out + TPoly.term(w * k ** 2, mono, 4 * a)
        out = out - TPoly.term(w * a * (a + 1), mono, -2)
    # swirl corrections carry x3^2 against the plane radius
    for mono in ((2, 0, 2), (0, 2, 2)):
        out = out - TPoly.term(4 * c, mono, p_sw)   # from the r^2/2 bracket
        out = out - TPoly.term(2 * c, mono, p_sw)   # from the x3^2 bracket
    out = out + TPoly.term(a * (1 - 2 * a), (0, 0, 2), -2)
    return out


def scale_field(f: TPoly, lam, weight: int) -> TPoly:
    """lam^weight * f(lam^2 t, lam x) as a ring element.

    Each term picks up lam^(weight + |mono| + 2p); the exponent 2p must be an
    integer so the factor stays rational (holds for the family when 2a is an
    integer).
    """
    lam = _frac(lam)
    if lam <= 0:
        raise ValueError("scaling factor must be positive")
    if lam == 1:
        return TPoly(f.terms)
    out = {}
    for m, cs in f.terms.items():
        deg = m[0] + m[1] + m[2]
        bucket = {}
        for p, c in cs.items():
            e = 2 * p
            if e.denominator != 1:
                raise ValueError(
                    f"lam^(2p) is irrational for exponent p = {p}; "
                    "restrict to parameters with 2a integral")
            bucket[p] = c * lam ** (weight + deg + int(e))
        out[m] = bucket
    return TPoly(out)


# -- residual certifiers -------------------------------------------------------


def momentum_residual_fields(nu, v: Vec, h: Vec, pres: TPoly) -> Vec:
    """d/dt v + (v.grad)v + grad P - nu lap v - (curl H) x H, exactly."""
    nu = _frac(nu)
    dtv = tuple(f.ddt() for f in v)
    lap_v = tuple(laplacian(f).scale(nu) for f in v)
    return tuple(
        dtv[i] + advect(v, v)[i] + grad(pres)[i] - lap_v[i]
        - lorentz_force(h)[i]
        for i in range(3)
    )


def induction_residual_fields(mu, v: Vec, h: Vec) -> Vec:
    """d/dt H - mu lap H - curl(v x H), with the induction drive read as v x H."""
    mu = _frac(mu)
    cv = curl(cross(v, h))
    return tuple(h[i].ddt() - laplacian(h[i]).scale(mu) - cv[i]
                 for i in range(3))


def momentum_residual(rp: RationalParams, velocity: Vec | None = None,
                      magnetic: Vec | None = None,
                      pressure: TPoly | None = None) -> Vec:
    v = velocity if velocity is not None else velocity_field(rp)
    h = magnetic if magnetic is not None else magnetic_field(rp)
    pres = pressure if pressure is not None else pressure_field(rp)
    return momentum_residual_fields(rp.nu, v, h, pres)


def induction_residual(rp: RationalParams, velocity: Vec | None = None,
                       magnetic: Vec | None = None) -> Vec:
    v = velocity if velocity is not None else velocity_field(rp)
    h = magnetic if magnetic is not None else magnetic_field(rp)
    return induction_residual_fields(rp.mu, v, h)


def divergence_residuals(rp: RationalParams, velocity: Vec | None = None,
                         magnetic: Vec | None = None) -> tuple[TPoly, TPoly]:
    v = velocity if velocity is not None else velocity_field(rp)
    h = magnetic if magnetic is not None else magnetic_field(rp)
    return divergence(v), divergence(h)


def _magnitude_squared(h: Vec) -> TPoly:
    return dot(h, h)


def verify_pressure_gradients(rp: RationalParams) -> dict:
    """Compare gradients of the modified pressure P + |H|^2/2 against the
    claimed bracket forms.

    radial check:  x1 d1 + x2 d2  of the modified pressure  vs  r^2 * bracket_r
    axial check:   d3              of the modified pressure  vs  2 x3 * bracket_z

    Returns a report carrying exact mismatch polynomials; the magnitude
    expansion of |H|^2 is checked as well.
    """
    a, k, ab = rp.a, rp.k, rp.a_bar
    c = (ab * k / (4 * a + 1)) ** 2        # = kbar^2 / 4
    p_sw = 2 * (2 * a + 1)

    h = magnetic_field(rp)
    pbar = pressure_field(rp) + _magnitude_squared(h).scale(Fraction(1, 2))

    x1, x2, x3 = TPoly.x(0), TPoly.x(1), TPoly.x(2)
    radial_lhs = x1 * pbar.ddx(0) + x2 * pbar.ddx(1)
    r2 = x1 * x1 + x2 * x2

    bracket_r = (TPoly.term(ab ** 2) + TPoly.term(k ** 2, (0, 0, 0), 4 * a)
                 - TPoly.term(a * (1 + a), (0, 0, 0), -2)
                 - TPoly.term(4 * c, (0, 0, 2), p_sw))
    radial_rhs = r2 * bracket_r

    axial_lhs = pbar.ddx(2)
    bracket_z = (TPoly.term(2 * ab ** 2)
                 + TPoly.term(a * (1 - 2 * a), (0, 0, 0), -2))
    axial_rhs = TPoly.term(2, (0, 0, 1)) * bracket_z

    expected_mag = (TPoly.term(ab ** 2, (2, 0, 0))
                    + TPoly.term(ab ** 2, (0, 2, 0))
                    + TPoly.term(4 * c, (2, 0, 2), p_sw)
                    + TPoly.term(4 * c, (0, 2, 2), p_sw)
                    + TPoly.term(4 * ab ** 2, (0, 0, 2)))

    radial_mismatch = radial_lhs - radial_rhs
    axial_mismatch = axial_lhs - axial_rhs
    return {
        "radial_identity": radial_mismatch.is_zero(),
        "radial_mismatch": radial_mismatch,
        "axial_identity": axial_mismatch.is_zero(),
        "axial_mismatch": axial_mismatch,
        "magnitude_expansion": _magnitude_squared(h) == expected_mag,
        "passed": radial_mismatch.is_zero() and axial_mismatch.is_zero()
        and _magnitude_squared(h) == expected_mag,
    }


def verify_scaling_invariance(rp: RationalParams, lam) -> dict:
    """Residuals of the parabolically rescaled triple, plus the exact
    commutation identity residual(scaled) == lam^3 * scaled(residual)."""
    lam = _frac(lam)
    if lam <= 0:
        raise ValueError("scaling factor must be positive")
    v = velocity_field(rp)
    h = magnetic_field(rp)
    pres = pressure_field(rp)

    v_s = tuple(scale_field(f, lam, 1) for f in v)
    h_s = tuple(scale_field(f, lam, 1) for f in h)
    p_s = scale_field(pres, lam, 2)

    mom_s = momentum_residual_fields(rp.nu, v_s, h_s, p_s)
    ind_s = induction_residual_fields(rp.mu, v_s, h_s)
    div_v_s = divergence(v_s)
    div_h_s = divergence(h_s)

    mom_base = momentum_residual_fields(rp.nu, v, h, pres)
    ind_base = induction_residual_fields(rp.mu, v, h)

    mom_commutes = all(
        mom_s[i] == scale_field(mom_base[i], lam, 3) for i in range(3))
    ind_commutes = all(
        ind_s[i] == scale_field(ind_base[i], lam, 3) for i in range(3))

    return {
        "lam": lam,
        "momentum_zero": vec_is_zero(mom_s),
        "induction_zero": vec_is_zero(ind_s),
        "divergence_zero": div_v_s.is_zero() and div_h_s.is_zero(),
        "momentum_residual": mom_s,
        "induction_residual": ind_s,
        "momentum_commutes": mom_commutes,
        "induction_commutes": ind_commutes,
    }


def verify_derivation_constants(rp: RationalParams) -> dict:
    """Re-solve the axisymmetric ansatz constants with exact arithmetic.

    Ansatz: radial/axial magnetic profile  (r, -2 z) * a_bar / gap^alpha  and
    azimuthal profile  kbar_c * r^p z^q / gap^beta.  The solving steps are:

    1. the radial transport equation forces  a_bar * alpha = 0  ->  alpha = 0;
    2. the azimuthal momentum balance forces p - 2 q + 1 = 0;
    3. matching the rotation source  2 k a_bar r gap^(2a)  in the azimuthal
       induction balance forces the gap exponent  -(beta + 1) = 2a  and the
       radial power p = 1 (hence q = 1 from step 2);
    4. the remaining coefficient balance
       kbar_c * (beta + a p - 2 a q - a) + 2 k a_bar = 0  ->
       kbar_c = 2 a_bar k / (4a + 1).
    """
    a, k, ab = rp.a, rp.k, rp.a_bar

    # step 1: coefficient of the alpha-equation is a_bar != 0, so alpha = 0
    alpha = Fraction(0)

    # step 3 exponent/power matching
    beta = -(2 * a + 1)
    p = 1
    # step 2
    q = Fraction(p + 1, 2)
    constraint_ok = (p - 2 * q + 1 == 0)

    # step 4 coefficient balance (linear in kbar_c, unique since 4a+1 != 0)
    coeff = beta + a * p - 2 * a * q - a        # = -(4a + 1)
    unique = coeff != 0
    kbar_c = 2 * k * ab / (-coeff) if unique else None

    return {
        "alpha": alpha,
        "p": Fraction(p),
        "q": q,
        "beta": beta,
        "kbar": kbar_c,
        "constraint_p_2q_1": constraint_ok,
        "unique": unique,
        "matches_family": kbar_c == rp.kbar,
    }
