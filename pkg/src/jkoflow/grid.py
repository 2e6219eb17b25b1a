"""Uniform cell-centred grid on (0, L) with zero-flux discrete calculus.

Cell values live at ``x_j = (j + 1/2) h``; face values live at ``j h`` for
``j = 0..n``.  The two boundary faces always carry zero gradient/flux, which
makes discrete mass conservation exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import IncompatibleRhs, InfeasibleConstraint, SingularWeight


@dataclass(frozen=True)
class Grid:
    n_cells: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.n_cells) != self.n_cells or self.n_cells < 3:
            raise ValueError(f"n_cells must be an integer >= 3, got {self.n_cells}")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def h(self) -> float:
        return self.length / self.n_cells

    @cached_property
    def cell_centers(self) -> np.ndarray:
        x = (np.arange(self.n_cells) + 0.5) * self.h
        x.setflags(write=False)
        return x

    @cached_property
    def faces(self) -> np.ndarray:
        x = np.arange(self.n_cells + 1) * self.h
        x.setflags(write=False)
        return x

    # array-level operators -------------------------------------------------

    def grad(self, u) -> np.ndarray:
        """Face gradient, zero on the two boundary faces."""
        u = np.asarray(u, dtype=float)
        g = np.zeros(u.shape[:-1] + (self.n_cells + 1,))
        g[..., 1:-1] = np.diff(u, axis=-1) / self.h
        return g

    def div(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return np.diff(f, axis=-1) / self.h

    def lap(self, u) -> np.ndarray:
        return self.div(self.grad(u))

    def face_average(self, u) -> np.ndarray:
        """Arithmetic mean of the two cells adjacent to each face.

        Boundary faces copy the adjacent cell (their flux is zero anyway).
        """
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape[:-1] + (self.n_cells + 1,))
        out[..., 1:-1] = 0.5 * (u[..., 1:] + u[..., :-1])
        out[..., 0] = u[..., 0]
        out[..., -1] = u[..., -1]
        return out

    def integrate(self, u) -> float:
        return float(self.h * np.sum(u))

    def lap_matrix(self) -> np.ndarray:
        """Dense matrix of the Neumann Laplacian (small grids / tests)."""
        n, h = self.n_cells, self.h
        A = np.zeros((n, n))
        for j in range(n - 1):
            A[j, j] -= 1.0
            A[j + 1, j + 1] -= 1.0
            A[j, j + 1] += 1.0
            A[j + 1, j] += 1.0
        return A / h**2


@dataclass(frozen=True)
class Density:
    """Cell averages of a density on ``grid``."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError(f"expected {self.grid.n_cells} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def is_admissible(self, M: float, mass: float, rtol: float = 1e-12) -> bool:
        v = self.values
        return bool(
            np.all(v >= 0.0) and np.all(v <= M) and abs(self.mass - mass) <= rtol * max(mass, 1e-300)
        )

    def with_values(self, values) -> "Density":
        return Density(values, self.grid)

    def __len__(self):
        return self.grid.n_cells


def _values(u):
    return u.values if isinstance(u, Density) else np.asarray(u, dtype=float)


def gradient_face(u: Density) -> np.ndarray:
    return u.grid.grad(u.values)


def laplacian_neumann(u: Density) -> np.ndarray:
    return u.grid.lap(u.values)


def divergence(grid: Grid, faces) -> np.ndarray:
    return grid.div(faces)


def _weighted_laplacian_bands(grid: Grid, weight: np.ndarray) -> np.ndarray:
    """Bands (solve_banded layout) of the matrix of -div(weight * grad)."""
    n, h = grid.n_cells, grid.h
    w = np.asarray(weight, dtype=float)[1:-1] / h**2
    ab = np.zeros((3, n))
    diag = np.zeros(n)
    diag[:-1] += w
    diag[1:] += w
    ab[0, 1:] = -w
    ab[1] = diag
    ab[2, :-1] = -w
    return ab


def neumann_solve(grid: Grid, w, weight, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``-div(weight * grad phi) = w`` with zero flux, zero-mean ``phi``.

    The operator has the constants as kernel.  Pinning ``phi_0 = 0`` turns it
    into a nonsingular tridiagonal system; the mean is removed afterwards.
    """
    w = _values(w)
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (grid.n_cells + 1,):
        raise ValueError("weight must be a face field of length n_cells + 1")
    scale = grid.h * np.sum(np.abs(w))
    if abs(grid.h * np.sum(w)) > rtol * max(scale, 1.0):
        raise IncompatibleRhs(f"h*sum(w) = {grid.h * np.sum(w):.3e} is not zero")
    if np.any(weight[1:-1] <= 0.0):
        raise SingularWeight("interior face weights must be strictly positive")
    w = w - np.mean(w)
    ab = _weighted_laplacian_bands(grid, weight)
    # pin phi_0: replace the first row by the identity
    ab[1, 0] = 1.0
    ab[0, 1] = 0.0
    rhs = w.copy()
    rhs[0] = 0.0
    phi = solve_banded((1, 1), ab, rhs)
    return phi - np.mean(phi)


def apply_weighted_laplacian(grid: Grid, phi, weight) -> np.ndarray:
    """Return ``-div(weight * grad phi)``."""
    return -grid.div(np.asarray(weight) * grid.grad(phi))


def project_admissible(v, grid: Grid, M: float, mass: float) -> Density:
    """Euclidean projection onto ``{0 <= u <= M, h*sum(u) = mass}``.

    The projection has the form ``clip(v + lam, 0, M)``; ``lam`` is bracketed
    and bisected, then refined in closed form on the set of unclipped cells.
    """
    v = _values(v)
    h, n = grid.h, grid.n_cells
    if mass < 0 or mass > M * grid.length * (1 + 1e-14):
        raise InfeasibleConstraint(f"mass {mass} not in [0, M*L] = [0, {M * grid.length}]")
    target = mass / h

    def total(lam):
        return np.sum(np.clip(v + lam, 0.0, M))

    if mass == 0.0:
        return Density(np.zeros(n), grid)
    if np.isfinite(M) and np.isclose(mass, M * grid.length, rtol=1e-14):
        return Density(np.full(n, M), grid)

    lo = -np.max(v)
    hi = target / n - np.min(v) + 1.0
    if np.isfinite(M):
        hi = max(hi, M - np.min(v))
    while total(hi) < target:
        hi = 2 * hi + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1.0):
            break
    lam = 0.5 * (lo + hi)
    u = np.clip(v + lam, 0.0, M)
    free = (u > 0.0) & (u < M)
    if np.any(free):
        fixed_sum = np.sum(u[~free])
        lam_exact = (target - fixed_sum - np.sum(v[free])) / np.count_nonzero(free)
        u2 = np.clip(v + lam_exact, 0.0, M)
        # accept the closed-form refinement only if the active set is unchanged
        if np.array_equal((u2 > 0.0) & (u2 < M), free):
            u = u2
    return Density(u, grid)
