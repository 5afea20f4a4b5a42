"""Finite-difference operators and sine-spectral solvers on the unit cube.

Scalar fields are (n, n, n) arrays of interior values on the uniform grid
y_j = j h, h = 1/(n+1); boundary values are identically zero and are baked
into every stencil.  Vector fields are (3, n, n, n).

The DST-I basis sin(pi xi . y) diagonalizes the compact Laplacian, the
implicit diffusion solves and the Poisson inversions.  The Leray projector
instead works with the composite operator div(grad(.)) built from the same
centered first-difference matrix M on both sides: per axis the composite is
the symmetric matrix M @ M, so a cached 1d eigendecomposition gives an exact
separable solve.  Because the discrete divergence is exactly the negative
adjoint of the discrete gradient, the resulting map is the l2-orthogonal
projector onto centered-divergence-free fields, is idempotent to roundoff,
and annihilates the centered divergence to roundoff.  (On grids with odd n
the centered difference has a checkerboard null vector; such modes are gauge
directions the projector leaves untouched.  All solver resolutions here are
even.)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "dx",
    "gradient",
    "divergence",
    "laplacian_apply",
    "vector_laplacian",
    "dst3",
    "idst3",
    "poisson_solve_dirichlet",
    "diffusion_solve",
    "leray_project",
    "max_divergence",
    "mode_mask",
    "sine_mode",
]


@dataclass(frozen=True)
class Grid:
    """Interior grid with n points per axis on the open unit cube."""

    n: int

    def __post_init__(self):
        if self.n < 4:
            raise ValueError(f"grid needs n >= 4, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.arange(1, self.n + 1) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Broadcastable y1, y2, y3 coordinate arrays."""
        c = self.coords
        return (c[:, None, None], c[None, :, None], c[None, None, :])

    @cached_property
    def _lap_eigens_1d(self) -> np.ndarray:
        xi = np.arange(1, self.n + 1)
        return -(4.0 / self.h ** 2) * np.sin(0.5 * np.pi * xi * self.h) ** 2

    @cached_property
    def lap_eigens(self) -> np.ndarray:
        """Eigenvalues of the compact 7-point Laplacian in the sine basis."""
        e = self._lap_eigens_1d
        return e[:, None, None] + e[None, :, None] + e[None, None, :]

    @cached_property
    def _cdiff_matrix(self) -> np.ndarray:
        """Centered first-difference matrix with zero boundary (skew-symmetric)."""
        m = np.zeros((self.n, self.n))
        off = 1.0 / (2.0 * self.h)
        idx = np.arange(self.n - 1)
        m[idx, idx + 1] = off
        m[idx + 1, idx] = -off
        return m

    @cached_property
    def _proj_eigen(self):
        """Eigendecomposition of the 1d composite div(grad(.)) = M @ M."""
        m = self._cdiff_matrix
        lam, vecs = np.linalg.eigh(m @ m)
        return lam, vecs

    @cached_property
    def _proj_inv_eigens(self) -> np.ndarray:
        lam, _ = self._proj_eigen
        lam3 = (lam[:, None, None] + lam[None, :, None] + lam[None, None, :])
        tol = 1e-12 * np.abs(lam).max()
        inv = np.zeros_like(lam3)
        active = lam3 < -tol
        inv[active] = 1.0 / lam3[active]
        return inv

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n,) * 3)

    def zeros_vec(self) -> np.ndarray:
        return np.zeros((3,) + (self.n,) * 3)


def _padded(u: np.ndarray) -> np.ndarray:
    return np.pad(u, 1)


def dx(grid: Grid, u: np.ndarray, axis: int) -> np.ndarray:
    """Centered first difference with the homogeneous Dirichlet boundary."""
    p = _padded(u)
    core = [slice(1, -1)] * 3
    up = list(core)
    dn = list(core)
    up[axis] = slice(2, None)
    dn[axis] = slice(None, -2)
    return (p[tuple(up)] - p[tuple(dn)]) / (2.0 * grid.h)


def gradient(grid: Grid, u: np.ndarray) -> np.ndarray:
    return np.stack([dx(grid, u, axis) for axis in range(3)])


def divergence(grid: Grid, vec: np.ndarray) -> np.ndarray:
    return sum(dx(grid, vec[axis], axis) for axis in range(3))


def laplacian_apply(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Compact 7-point Laplacian with zero boundary."""
    p = _padded(u)
    out = -6.0 * u
    for axis in range(3):
        core = [slice(1, -1)] * 3
        up = list(core)
        dn = list(core)
        up[axis] = slice(2, None)
        dn[axis] = slice(None, -2)
        out = out + p[tuple(up)] + p[tuple(dn)]
    return out / grid.h ** 2


def vector_laplacian(grid: Grid, vec: np.ndarray) -> np.ndarray:
    return np.stack([laplacian_apply(grid, vec[i]) for i in range(3)])


def dst3(u: np.ndarray) -> np.ndarray:
    """Forward DST-I over the trailing three axes."""
    return sfft.dstn(u, type=1, axes=(-3, -2, -1))


def idst3(u_hat: np.ndarray) -> np.ndarray:
    return sfft.idstn(u_hat, type=1, axes=(-3, -2, -1))


def poisson_solve_dirichlet(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Solve the compact discrete Laplace problem  lap u = rhs, u|boundary = 0.

    The sine transform inverts the operator mode by mode, so the discrete
    residual is pure roundoff.
    """
    return idst3(dst3(rhs) / grid.lap_eigens)


def diffusion_solve(grid: Grid, u: np.ndarray, coeff: float) -> np.ndarray:
    """Solve (I - coeff * lap) x = u; coeff = dtau * viscosity >= 0."""
    if coeff == 0.0:
        return u.copy()
    return idst3(dst3(u) / (1.0 - coeff * grid.lap_eigens))


def _composite_poisson_solve(grid: Grid, rhs: np.ndarray) -> np.ndarray:
    """Solve div(grad(phi)) = rhs through the cached separable eigenbasis."""
    _, v = grid._proj_eigen
    x = np.tensordot(v.T, rhs, axes=(1, 0))
    x = np.tensordot(v.T, x, axes=(1, 1)).transpose(1, 0, 2)
    x = np.tensordot(v.T, x, axes=(1, 2)).transpose(1, 2, 0)
    x *= grid._proj_inv_eigens
    x = np.tensordot(v, x, axes=(1, 0))
    x = np.tensordot(v, x, axes=(1, 1)).transpose(1, 0, 2)
    x = np.tensordot(v, x, axes=(1, 2)).transpose(1, 2, 0)
    return x


def leray_project(grid: Grid, vec: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto fields with zero centered divergence."""
    phi = _composite_poisson_solve(grid, divergence(grid, vec))
    return vec - gradient(grid, phi)


def max_divergence(grid: Grid, vec: np.ndarray) -> float:
    return float(np.abs(divergence(grid, vec)).max())


def mode_mask(n: int, theta: float) -> np.ndarray:
    """Boolean keep-mask for modes with max(xi1, xi2, xi3) <= theta."""
    xi = np.arange(1, n + 1)
    keep1 = xi <= theta
    return (keep1[:, None, None] & keep1[None, :, None] & keep1[None, None, :])


def sine_mode(grid: Grid, xi: tuple[int, int, int]) -> np.ndarray:
    """Grid samples of the product mode sin(pi xi1 y1) sin(pi xi2 y2) sin(pi xi3 y3)."""
    c = grid.coords
    return (np.sin(np.pi * xi[0] * c)[:, None, None]
            * np.sin(np.pi * xi[1] * c)[None, :, None]
            * np.sin(np.pi * xi[2] * c)[None, None, :])
