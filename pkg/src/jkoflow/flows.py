"""Auxiliary flows: Neumann heat flow, viscous conservation law, and a direct
semi-implicit solver for the fourth-order equation (used as an oracle)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse
from scipy.linalg import LinAlgError, solve_banded

from .errors import CflViolation, DegenerateState, LinearSolveFailure, PositivityLoss
from .functionals import TestPotential, energy, entropy_functional
from .grid import Density, Grid, _weighted_laplacian_bands
from .physics import ProblemSpec


@dataclass
class FlowState:
    v: Density
    s: float = 0.0
    kind: str = "heat"


def _implicit_diffusion(grid: Grid, v: np.ndarray, coef: float) -> np.ndarray:
    """Solve ``(I - coef * Lap_h) w = v``."""
    ab = coef * _weighted_laplacian_bands(grid, np.ones(grid.n_cells + 1))
    ab[1] += 1.0
    return solve_banded((1, 1), ab, v)


def heat_step(v: Density, ds: float, diffusivity: float = 1.0) -> Density:
    if not ds > 0:
        raise ValueError("ds must be positive")
    return v.with_values(_implicit_diffusion(v.grid, v.values, ds * diffusivity))


@dataclass(frozen=True)
class DissipationRate:
    rate: float
    h2_term: float
    g_term: float


def heat_dissipation_rate(v: Density, spec: ProblemSpec) -> DissipationRate:
    """``dE/ds`` along the discrete heat flow: ``-|Lap v|^2 - sum_faces D G'(v) . D v``.

    The second term is the exact discrete counterpart of ``int G''(v) |Dv|^2``.
    """
    u = v.values
    if np.any(u <= 0.0) or np.any(u >= spec.M):
        raise DegenerateState("heat dissipation rate needs 0 < v < M in every cell")
    g = v.grid
    lap = g.lap(u)
    h2 = g.h * float(lap @ lap)
    gt = g.h * float(g.grad(np.asarray(spec.free_energy.dG(u), float)) @ g.grad(u))
    return DissipationRate(-h2 - gt, h2, gt)


# ---------------------------------------------------------------------------
# viscous conservation law


def entropic_face_mobility(v: np.ndarray, grid: Grid, spec: ProblemSpec) -> np.ndarray:
    """Face mobility ``Dv / D U'(v)``, the mean for which ``m_hat D U'(v) = Dv``.

    Falls back to ``m`` of the arithmetic mean where adjacent cells coincide.
    Boundary faces are zero.
    """
    dU = np.asarray(spec.entropy.dU(v), float)
    dv = np.diff(v)
    du = np.diff(dU)
    mid = 0.5 * (v[1:] + v[:-1])
    with np.errstate(divide="ignore", invalid="ignore"):
        mh = dv / du
    close = ~np.isfinite(mh) | (np.abs(dv) <= 1e-12 * np.maximum(np.abs(mid), 1e-300))
    mh = np.where(close, np.asarray(spec.mobility.m(mid), float), mh)
    out = np.zeros(grid.n_cells + 1)
    out[1:-1] = np.maximum(mh, 0.0)
    return out


def cfl_limit(grid: Grid, eps: float) -> float:
    return grid.h**2 * min(1.0 / eps, 1.0) / 4.0


def viscous_claw_step(v: Density, V: TestPotential, eps: float, ds: float, spec: ProblemSpec) -> Density:
    """One split step of ``v_s = div(m(v) DV) + eps Lap v``.

    Transport explicit with the entropic face mobility, diffusion implicit.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = v.grid
    if ds > cfl_limit(g, eps) * (1 + 1e-12):
        raise CflViolation(f"ds = {ds:.3e} exceeds {cfl_limit(g, eps):.3e}")
    u = v.values
    flux = entropic_face_mobility(u, g, spec) * V.grad
    rhs = u + ds * g.div(flux)
    return v.with_values(_implicit_diffusion(g, rhs, ds * eps))


def stationary_profile(grid: Grid, V: TestPotential, eps: float, spec: ProblemSpec, mass: float) -> Density:
    """Stationary solution ``(U')^{-1}(c - V/eps)`` with the prescribed mass."""
    dU = spec.entropy.dU
    M = spec.M

    def inverse(y: float) -> float:
        lo, hi = 0.0, (M if math.isfinite(M) else max(2 * spec.s0, 1.0))
        if not math.isfinite(M):
            while float(dU(hi)) < y:
                hi *= 2.0
        f = lambda s: float(dU(s)) - y  # noqa: E731
        a = lo + 1e-300
        if f(a) > 0:
            return a
        b = hi if math.isfinite(M) and hi == M else hi
        if math.isfinite(M):
            b = M * (1 - 1e-16)
            if f(b) < 0:
                return b
        return optimize.brentq(f, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)

    def profile(c):
        return np.array([inverse(c - Vj / eps) for Vj in V.V])

    def excess(c):
        return grid.integrate(profile(c)) - mass

    c_lo, c_hi = -1.0, 1.0
    while excess(c_lo) > 0:
        c_lo *= 2.0
    while excess(c_hi) < 0:
        c_hi *= 2.0
    c = optimize.brentq(excess, c_lo, c_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    return Density(profile(c), grid)


# ---------------------------------------------------------------------------
# direct oracle


def _tridiag(grid: Grid, weight) -> sparse.csr_matrix:
    """Sparse matrix of ``div(weight * grad)``."""
    ab = _weighted_laplacian_bands(grid, weight)
    n = grid.n_cells
    return -sparse.diags([ab[0, 1:], ab[1], ab[2, :-1]], [1, 0, -1], shape=(n, n), format="csr")


def _to_banded(A, l: int) -> np.ndarray:
    n = A.shape[0]
    ab = np.zeros((2 * l + 1, n))
    A = A.todia()
    for off, row in zip(A.offsets, A.data):
        if abs(off) > l:
            continue
        # dia data is aligned by column index
        ab[l - off] = row[:n]
    return ab


def direct_pde_solve(u0: Density, spec: ProblemSpec, tau: float, T: float):
    """Semi-implicit scheme ``(I + tau B(u^k)) u^{k+1} = u^k + tau Lap P(u^k)``
    with ``B(u) = div(m(face avg u) D Lap)``.

    Raises :class:`PositivityLoss` as soon as an iterate leaves ``[0, M]``;
    the exception carries the time and the trajectory computed so far.
    """
    from .jko import StepRecord, Trajectory

    g = u0.grid
    lap = _tridiag(g, np.ones(g.n_cells + 1))
    n_steps = int(math.ceil(T / tau - 1e-9))
    u = u0.values.copy()
    rec0 = StepRecord(0, 0.0, 0.0, energy(u0, spec), entropy_functional(u0, spec), math.nan, "direct")
    traj = Trajectory(tau, [u0], [rec0], spec)
    eye = sparse.identity(g.n_cells, format="csr")
    for k in range(1, n_steps + 1):
        mface = np.asarray(spec.mobility.m(g.face_average(u)), float)
        W = _tridiag(g, mface)
        A = eye + tau * (W @ lap)
        rhs = u + tau * (lap @ np.asarray(spec.pressure(u), float))
        try:
            u = solve_banded((2, 2), _to_banded(A, 2), rhs)
        except (LinAlgError, ValueError) as exc:
            raise LinearSolveFailure(str(exc)) from exc
        if not np.all(np.isfinite(u)):
            raise LinearSolveFailure("non-finite iterate")
        if np.any(u < 0.0) or np.any(u > spec.M):
            raise PositivityLoss(
                f"iterate left [0, M] at t = {k * tau:.6g} (min {u.min():.3e}, max {u.max():.3e})",
                time=k * tau, trajectory=traj,
            )
        d = Density(u, g)
        traj.iterates.append(d)
        traj.records.append(StepRecord(k, k * tau, 0.0, energy(d, spec), math.nan, math.nan, "direct"))
    return traj
