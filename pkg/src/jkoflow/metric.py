"""Weighted transport distance between densities on a 1D grid.

Dynamic backend
    Paths are parametrised by their cumulative masses ``Q[k, j] = h * sum_{i<j} rho[k, i]``
    (``K + 1`` slices, faces ``j = 0..n``).  The face momentum ``F[k] = -K (Q[k+1] - Q[k])``
    then satisfies the discrete continuity equation and the zero-flux condition exactly,
    and the action ``sum_k sum_j (h/K) F^2 / m(rho_hat)`` is minimised over the interior
    slices by a damped Newton method with a logarithmic barrier on ``0 < rho < M``.
    ``rho_hat`` is the arithmetic mean of the four (slice, cell) values around a face.

Frozen backend
    Mobility frozen at a reference density: ``W^2 = h sum_j F_j^2 / m_face(u_ref)``
    with ``F`` the flux solving ``div F = u1 - u0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded

from .errors import InfeasibleConstraint, MassMismatch, SolverStall
from .grid import Density, Grid, neumann_solve
from .physics import Mobility, ProblemSpec

WEIGHT_FLOOR = 1e-12
LIFT = 1e-8


@dataclass(frozen=True)
class NewtonOptions:
    mu0: float = 1e-4
    mu_min: float = 1e-13
    mu_factor: float = 0.1
    max_iter: int = 400
    center_tol: float = 1e-9  # dec^2/2 relative to scale, intermediate barrier levels
    final_tol: float = 1e-10  # Newton decrement at the last level
    strict: bool = False


@dataclass(frozen=True)
class MetricBackend:
    kind: str = "dynamic"  # "dynamic" | "frozen"
    K: int = 8
    options: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        if self.kind not in ("dynamic", "frozen"):
            raise ValueError(f"unknown metric backend {self.kind!r}")
        if self.kind == "dynamic" and self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass
class TransportPlanPath:
    rho: np.ndarray  # (K+1, n)
    momentum: np.ndarray  # (K, n+1)
    K: int
    action: float

    def continuity_residual(self, grid: Grid) -> float:
        r = (self.rho[1:] - self.rho[:-1]) * self.K + grid.div(self.momentum)
        return float(np.max(np.abs(r))) if r.size else 0.0


@dataclass
class SolveInfo:
    iterations: int = 0
    mu: float = 0.0
    decrement: float = 0.0
    degraded: bool = False
    shifted: int = 0
    message: str = ""


@dataclass
class DistanceResult:
    value: float
    path: TransportPlanPath
    info: SolveInfo


def cumulative(values: np.ndarray, h: float) -> np.ndarray:
    q = np.zeros(values.shape[:-1] + (values.shape[-1] + 1,))
    q[..., 1:] = h * np.cumsum(values, axis=-1)
    return q


# ---------------------------------------------------------------------------
# banded assembly helpers


class _BandedPattern:
    """Precomputed scatter pattern for local Hessian blocks into lower band storage."""

    def __init__(self, ids: np.ndarray, coefs: list, N: int, bw: int):
        # ids: (p, T) global variable index per local slot, -1 if fixed
        p, T = ids.shape
        lin, term, cvals = [], [], []
        for a in range(p):
            for b in range(p):
                gi, gj = ids[a], ids[b]
                mask = (gi >= 0) & (gj >= 0) & (gi >= gj)
                if not mask.any():
                    continue
                idx = np.nonzero(mask)[0]
                lin.append((gi[idx] - gj[idx]) * N + gj[idx])
                term.append(idx)
                cvals.append(np.array([[c[a] * c[b] for c in coefs]]).repeat(idx.size, axis=0))
        self.N, self.bw = N, bw
        self.lin = np.concatenate(lin) if lin else np.zeros(0, int)
        self.term = np.concatenate(term) if term else np.zeros(0, int)
        self.cvals = np.concatenate(cvals) if cvals else np.zeros((0, len(coefs)))

    def assemble(self, weights: list) -> np.ndarray:
        """``weights[r]`` multiplies the outer product ``coefs[r] coefs[r]^T``."""
        vals = np.zeros(self.lin.size)
        for r, w in enumerate(weights):
            vals += w[self.term] * self.cvals[:, r]
        out = np.bincount(self.lin, vals, minlength=(self.bw + 1) * self.N)
        return out.reshape(self.bw + 1, self.N)


class PathProblem:
    """Barrier-augmented minimisation over cumulative-mass paths.

    Objective: ``action_coef * A(Q) + E(v) + barrier``, where ``v`` is the last
    slice when it is free (JKO mode).  With ``frozen_weight`` given the action
    uses that face weight instead of ``m(rho_hat)`` (requires K = 1).
    """

    def __init__(self, grid: Grid, mobility: Mobility, K: int, Q0: np.ndarray,
                 Q_last: Optional[np.ndarray] = None, action_coef: float = 1.0,
                 energy=None, frozen_weight: Optional[np.ndarray] = None):
        self.grid, self.mob, self.K = grid, mobility, K
        self.n = n = grid.n_cells
        self.h = grid.h
        self.M = mobility.M
        self.coef = action_coef
        self.energy = energy
        self.frozen = frozen_weight
        self.free_last = Q_last is None
        self.Kf = Kf = K if self.free_last else K - 1
        self.N = N = Kf * (n - 1)
        self.Q = np.zeros((K + 1, n + 1))
        self.Q[0] = Q0
        if Q_last is not None:
            self.Q[K] = Q_last
        else:
            self.Q[K] = Q0
        self.Q[:, n] = Q0[n]

        var = -np.ones((K + 1, n + 1), dtype=int)
        if N:
            kk, jj = np.meshgrid(np.arange(1, Kf + 1), np.arange(1, n), indexing="ij")
            var[kk, jj] = (jj - 1) * Kf + (kk - 1)
        self.var = var
        order = np.argsort(var.ravel())
        self.free_flat = order[var.ravel()[order] >= 0]
        self.bw = 2 * Kf + 1 if N else 0

        # action terms: interval k, interior face j
        k = np.arange(K)[:, None]
        j = np.arange(1, n)[None, :]
        kb = np.broadcast_to(k, (K, n - 1)).ravel()
        jb = np.broadcast_to(j, (K, n - 1)).ravel()
        self.t_k, self.t_j = kb, jb
        c = 1.0 / (4.0 * self.h)
        slots = [(kb + 1, jb), (kb, jb), (kb, jb + 1), (kb, jb - 1), (kb + 1, jb + 1), (kb + 1, jb - 1)]
        self.slot_flat = np.array([s[0] * (n + 1) + s[1] for s in slots])
        self.beta = np.array([1.0, -1.0, 0, 0, 0, 0])
        self.alpha = np.array([0, 0, c, -c, c, -c])
        ids = np.array([var[s] for s in slots])
        if N:
            if self.frozen is None:
                # fbb bb' + fba (ba' + ab') + faa aa' = (fbb - fba) bb' + (faa - fba) aa' + fba (a+b)(a+b)'
                self.act_pat = _BandedPattern(ids, [self.beta, self.alpha, self.alpha + self.beta], N, self.bw)
            else:
                self.act_pat = _BandedPattern(ids[:2], [self.beta[:2]], N, self.bw)

        # cell terms on free slices: rho_i = (Q[k, i+1] - Q[k, i]) / h
        ks = np.arange(1, Kf + 1)[:, None]
        ii = np.arange(n)[None, :]
        ck = np.broadcast_to(ks, (Kf, n)).ravel()
        ci = np.broadcast_to(ii, (Kf, n)).ravel()
        self.c_k, self.c_i = ck, ci
        self.cell_flat = np.array([ck * (n + 1) + ci + 1, ck * (n + 1) + ci])
        cell_ids = np.array([var[ck, ci + 1], var[ck, ci]])
        self.d_cell = np.array([1.0, -1.0]) / self.h
        if N:
            self.cell_pat = _BandedPattern(cell_ids, [self.d_cell], N, self.bw)
        # the free last slice carries the energy
        if self.free_last and energy is not None:
            self._setup_dirichlet()

    # -- helpers -----------------------------------------------------------

    def _setup_dirichlet(self):
        n, h, K = self.n, self.h, self.K
        # D v at interior face f: (Q[f+1] - 2 Q[f] + Q[f-1]) / h^2
        f = np.arange(1, n)
        ids = np.array([self.var[K, f + 1], self.var[K, f], self.var[K, f - 1]])
        self.dir_flat = np.array([K * (n + 1) + f + 1, K * (n + 1) + f, K * (n + 1) + f - 1])
        self.dir_coef = np.array([1.0, -2.0, 1.0]) / h**2
        pat = _BandedPattern(ids, [self.dir_coef], self.N, self.bw)
        self.dir_hess = pat.assemble([np.full(n - 1, h)])

    def set_x(self, x):
        self.Q.ravel()[self.free_flat] = x

    def get_x(self):
        return self.Q.ravel()[self.free_flat].copy()

    def rho(self, Q=None):
        Q = self.Q if Q is None else Q
        return np.diff(Q, axis=1) / self.h

    def terms(self, Q):
        """``b`` and ``rho_hat`` for every action term."""
        b = Q[1:, 1:-1] - Q[:-1, 1:-1]
        a = (Q[:-1, 2:] - Q[:-1, :-2] + Q[1:, 2:] - Q[1:, :-2]) / (4.0 * self.h)
        return b, a

    def face_mobility(self, a):
        if self.frozen is not None:
            return np.broadcast_to(self.frozen[1:-1], a.shape)
        return np.asarray(self.mob.m(a), float)

    def action(self, Q=None) -> float:
        Q = self.Q if Q is None else Q
        b, a = self.terms(Q)
        m = self.face_mobility(a)
        w = self.h * self.K
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(b == 0.0, 0.0, w * b * b / m)
        t = np.where((m <= 0) & (b != 0.0), np.inf, t)
        return float(np.sum(t))

    def energy_value(self, v) -> float:
        if self.energy is None:
            return 0.0
        dv = np.diff(v) / self.h
        return 0.5 * self.h * float(dv @ dv) + self.h * float(np.sum(self.energy.G(v)))

    def feasible(self, Q) -> bool:
        if not self.N:
            return True
        r = self.rho(Q)[1:self.Kf + 1]
        return bool(np.all(r > 0.0) and np.all(r < self.M))

    def objective(self, Q, mu) -> float:
        f = self.coef * self.action(Q)
        r = self.rho(Q)[1:self.Kf + 1]
        if self.free_last:
            f += self.energy_value(r[-1])
        f -= mu * self.h * float(np.sum(np.log(r)))
        if math.isfinite(self.M):
            f -= mu * self.h * float(np.sum(np.log(self.M - r)))
        return f

    def grad_hess(self, mu, need_hess=True):
        n, h, K, Q = self.n, self.h, self.K, self.Q
        gQ = np.zeros((K + 1) * (n + 1))
        b, a = self.terms(Q)
        b, a = b.ravel(), a.ravel()
        m = self.face_mobility(a).ravel() if self.frozen is None else np.tile(self.frozen[1:-1], K)
        w = self.coef * h * K
        fb = 2 * w * b / m
        if self.frozen is None:
            dm = np.asarray(self.mob.dm(a), float)
            fa = -w * b * b * dm / m**2
            gQ += np.bincount(self.slot_flat.ravel(), (np.outer(self.beta, fb) + np.outer(self.alpha, fa)).ravel(),
                              minlength=gQ.size)
        else:
            gQ += np.bincount(self.slot_flat[:2].ravel(), np.outer(self.beta[:2], fb).ravel(), minlength=gQ.size)
        # cell terms (barrier + potential on last slice)
        r = self.rho()[self.c_k, self.c_i]
        d1 = -mu * h / r
        d2 = mu * h / r**2
        if math.isfinite(self.M):
            d1 = d1 + mu * h / (self.M - r)
            d2 = d2 + mu * h / (self.M - r) ** 2
        if self.free_last and self.energy is not None:
            last = self.c_k == K
            v = r[last]
            d1[last] += h * np.asarray(self.energy.dG(v), float)
            d2[last] += h * np.asarray(self.energy.d2G(v), float)
            vfull = v
            dv = np.diff(vfull) / h  # face gradient of v
            # d/dQ of 0.5 h sum (Dv)^2 with Dv = coef . Q
            gQ += np.bincount(self.dir_flat.ravel(), (np.outer(self.dir_coef, h * dv)).ravel(), minlength=gQ.size)
        gQ += np.bincount(self.cell_flat.ravel(), np.outer(self.d_cell, d1).ravel(), minlength=gQ.size)
        g = gQ[self.free_flat]
        if not need_hess:
            return g, None
        if self.frozen is None:
            fbb = 2 * w / m
            d2m = np.asarray(self.mob.d2m(a), float)
            fba = -2 * w * b * dm / m**2
            faa = w * b * b * (2 * dm**2 / m**3 - d2m / m**2)
            H = self.act_pat.assemble([fbb - fba, faa - fba, fba])
        else:
            H = self.act_pat.assemble([2 * w / m])
        H = H + self.cell_pat.assemble([d2])
        if self.free_last and self.energy is not None:
            H = H + self.dir_hess
        return g, H

    def max_step(self, d) -> float:
        """Largest t keeping the free-slice densities strictly inside (0, M)."""
        D = np.zeros_like(self.Q)
        D.ravel()[self.free_flat] = d
        r = self.rho()[1:self.Kf + 1]
        dr = (np.diff(D, axis=1) / self.h)[1:self.Kf + 1]
        t = np.inf
        neg = dr < 0
        if neg.any():
            t = min(t, float(np.min(-r[neg] / dr[neg])))
        if math.isfinite(self.M):
            pos = dr > 0
            if pos.any():
                t = min(t, float(np.min((self.M - r[pos]) / dr[pos])))
        return t


def _lift(Q, grid: Grid, s0: float, M: float, eta: float = LIFT):
    """Move interior slices towards the flat density so that 0 < rho < M."""
    flat = s0 * grid.faces
    r = np.diff(Q, axis=-1) / grid.h
    if np.all(r > 0) and np.all(r < M):
        return Q
    return (1 - eta) * Q + eta * flat


def _factor(H, info: SolveInfo):
    shift = 0.0
    diag = float(np.max(np.abs(H[0]))) if H.size else 1.0
    for _ in range(60):
        try:
            Hs = H.copy()
            Hs[0] += shift
            return cholesky_banded(Hs, lower=True)
        except LinAlgError:
            shift = max(2 * shift, 1e-10 * diag)
            info.shifted += 1
    raise LinAlgError("could not factor shifted Hessian")


def newton_barrier(prob: PathProblem, opts: NewtonOptions, scale: float = 1.0) -> SolveInfo:
    """Barrier path-following with damped Newton steps.  Mutates ``prob.Q``."""
    info = SolveInfo()
    if not prob.N:
        return info
    mu = opts.mu0 * scale
    mu_min = opts.mu_min * scale
    it = 0
    while True:
        last = mu <= mu_min
        tol = opts.final_tol * max(scale, 1.0) if last else None
        stalled = 0
        while it < opts.max_iter:
            it += 1
            g, H = prob.grad_hess(mu)
            try:
                cb = _factor(H, info)
            except LinAlgError:
                info.degraded = True
                info.message = "factorization failed"
                return _gradient_fallback(prob, mu, info, opts)
            d = -cho_solve_banded((cb, True), g)
            dec = float(-g @ d)
            if dec < 0:
                d, dec = -g, float(g @ g)
            info.decrement = math.sqrt(max(dec, 0.0))
            if (last and info.decrement <= tol) or (not last and dec / 2 <= opts.center_tol * scale):
                break
            t = min(1.0, 0.95 * prob.max_step(d))
            x0 = prob.get_x()
            f0 = prob.objective(prob.Q, mu)
            gd = float(g @ d)
            accepted = False
            for _ in range(60):
                prob.set_x(x0 + t * d)
                if prob.feasible(prob.Q):
                    f1 = prob.objective(prob.Q, mu)
                    if f1 <= f0 + 1e-4 * t * gd or (f1 - f0) <= 1e-15 * max(abs(f0), 1.0) * 4:
                        accepted = True
                        break
                t *= 0.5
            if not accepted:
                prob.set_x(x0)
                stalled += 1
                if stalled >= 2:
                    break
                continue
            if last and abs(f1 - f0) <= 1e-15 * max(abs(f0), 1.0) and info.decrement <= 1e3 * tol:
                break
        if it >= opts.max_iter:
            info.degraded = True
            info.message = "iteration limit"
            break
        if mu <= mu_min:
            break
        mu = max(mu * opts.mu_factor, mu_min)
    info.iterations = it
    info.mu = mu
    if info.degraded and opts.strict:
        raise SolverStall(info.message)
    return info


def _gradient_fallback(prob: PathProblem, mu, info: SolveInfo, opts: NewtonOptions) -> SolveInfo:
    """Projected gradient with feasibility backtracking (used if Newton fails)."""
    for _ in range(2000):
        g, _ = prob.grad_hess(mu, need_hess=False)
        d = -g
        t = min(1.0, 0.95 * prob.max_step(d))
        x0 = prob.get_x()
        f0 = prob.objective(prob.Q, mu)
        while t > 1e-20:
            prob.set_x(x0 + t * d)
            if prob.feasible(prob.Q) and prob.objective(prob.Q, mu) <= f0 - 1e-4 * t * float(g @ g):
                break
            t *= 0.5
        else:
            prob.set_x(x0)
            break
    if opts.strict:
        raise SolverStall(info.message)
    return info


# ---------------------------------------------------------------------------
# public distances


def _check_pair(u0: Density, u1: Density, M: Optional[float] = None):
    if u0.grid != u1.grid:
        raise ValueError("densities live on different grids")
    if M is not None:
        for u in (u0, u1):
            if np.any(u.values < 0.0) or np.any(u.values > M):
                raise InfeasibleConstraint("endpoint density outside [0, M]")
    if abs(u0.mass - u1.mass) > 1e-10 * max(u0.mass, 1.0):
        raise MassMismatch(f"masses differ: {u0.mass} vs {u1.mass}")


def path_from_Q(Q: np.ndarray, grid: Grid, K: int, action: float) -> TransportPlanPath:
    rho = np.diff(Q, axis=1) / grid.h
    mom = -K * (Q[1:] - Q[:-1])
    mom[:, 0] = mom[:, -1] = 0.0
    return TransportPlanPath(rho, mom, K, action)


def distance_dynamic(u0: Density, u1: Density, K: int, spec: ProblemSpec,
                     options: NewtonOptions = NewtonOptions()) -> DistanceResult:
    """Dynamic-formulation distance with ``K`` time slices."""
    _check_pair(u0, u1, spec.M)
    grid = u0.grid
    h = grid.h
    Q0 = cumulative(u0.values, h)
    Q1 = cumulative(u1.values, h)
    Q1[-1] = Q0[-1]
    prob = PathProblem(grid, spec.mobility, K, Q0, Q_last=Q1)
    s = np.linspace(0.0, 1.0, K + 1)[:, None]
    Q = (1 - s) * Q0 + s * Q1
    for k in range(1, K):
        Q[k] = _lift(Q[k], grid, spec.s0, spec.M)
    prob.Q[:] = Q
    if np.array_equal(u0.values, u1.values):
        return DistanceResult(0.0, path_from_Q(prob.Q, grid, K, 0.0), SolveInfo())
    scale = max(prob.action(), 1e-300)
    info = newton_barrier(prob, options, scale=scale if np.isfinite(scale) else 1.0)
    A = prob.action()
    return DistanceResult(math.sqrt(A), path_from_Q(prob.Q, grid, K, A), info)


def frozen_weight(u_ref: Density, mobility: Mobility, s0: float):
    """Face weights ``m(face_average(u_ref))`` floored at ``1e-12 m(s0)``.

    Returns ``(weight, n_floored)``.
    """
    w = np.asarray(mobility.m(u_ref.grid.face_average(u_ref.values)), float)
    floor = WEIGHT_FLOOR * float(mobility.m(s0))
    floored = int(np.count_nonzero(w[1:-1] < floor))
    return np.maximum(w, floor), floored


def distance_frozen(u_ref: Density, u0: Density, u1: Density, spec: ProblemSpec) -> float:
    _check_pair(u0, u1)
    grid = u0.grid
    w, _ = frozen_weight(u_ref, spec.mobility, spec.s0)
    diff = u1.values - u0.values
    if not np.any(diff):
        return 0.0
    phi = neumann_solve(grid, diff, w)
    dphi = grid.grad(phi)
    return math.sqrt(max(grid.h * float(np.sum(w * dphi**2)), 0.0))


# ---------------------------------------------------------------------------
# brute-force oracle for tiny instances


@dataclass
class OracleResult:
    value: float
    kkt_residual: float
    certified: bool
    n_starts: int


def distance_oracle_small(u0: Density, u1: Density, spec: ProblemSpec, K: int = 2,
                          n_random: int = 32, seed: int = 0) -> OracleResult:
    """Multi-start SLSQP on the raw (density, momentum) variables.

    Independent of the cumulative-mass parametrisation used by
    :func:`distance_dynamic`: continuity is imposed as explicit equality
    constraints and the box as bounds.
    """
    grid = u0.grid
    n, h = grid.n_cells, grid.h
    if n > 5 or K > 4:
        raise ValueError("oracle limited to n_cells <= 5 and K <= 4")
    _check_pair(u0, u1, spec.M)
    M = spec.M
    m = spec.mobility
    nr = (K - 1) * n
    nf = K * (n - 1)

    def unpack(z):
        rho = np.vstack([u0.values, z[:nr].reshape(K - 1, n), u1.values]) if K > 1 else np.vstack([u0.values, u1.values])
        F = np.zeros((K, n + 1))
        F[:, 1:-1] = z[nr:].reshape(K, n - 1)
        return rho, F

    def _parts(z):
        rho, F = unpack(z)
        a = 0.25 * (rho[:-1, :-1] + rho[:-1, 1:] + rho[1:, :-1] + rho[1:, 1:])
        return F[:, 1:-1], a

    def action(z):
        f, a = _parts(z)
        mm = np.asarray(m.m(a), float)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(f == 0, 0.0, (h / K) * f * f / mm)
        return float(np.sum(t))

    def action_grad(z):
        f, a = _parts(z)
        mm = np.asarray(m.m(a), float)
        dm = np.asarray(m.dm(a), float)
        gf = 2 * (h / K) * f / mm
        ga = -(h / K) * f * f * dm / mm**2
        grho = np.zeros((K + 1, n))
        for dk in (0, 1):
            for dj in (0, 1):
                grho[dk:K + dk, dj:n - 1 + dj] += 0.25 * ga
        return np.concatenate([grho[1:K].ravel(), gf.ravel()])

    def cons(z):
        rho, F = unpack(z)
        return ((rho[1:] - rho[:-1]) * K + np.diff(F, axis=1) / h).ravel()

    # constraints are affine: Jacobian from unit probes, assembled once
    base = cons(np.zeros(nr + nf))
    Jc = np.column_stack([cons(e) - base for e in np.eye(nr + nf)])
    # summing every row gives the (matched) mass difference: drop one to keep full rank
    Jr, br = Jc[:-1], base[:-1]

    lb = 1e-10
    ub = M - 1e-10 if math.isfinite(M) else None
    bounds = optimize.Bounds(np.r_[np.full(nr, lb), np.full(nf, -np.inf)],
                             np.r_[np.full(nr, np.inf if ub is None else ub), np.full(nf, np.inf)])
    rng = np.random.default_rng(seed)
    starts = []
    s = np.linspace(0, 1, K + 1)[1:-1, None]
    lin_rho = ((1 - s) * u0.values + s * u1.values).ravel()
    Q0, Q1 = cumulative(u0.values, h), cumulative(u1.values, h)
    lin_F = np.tile(-(Q1 - Q0)[1:-1], K)
    starts.append(np.concatenate([np.maximum(lin_rho, 2 * lb), lin_F]))
    top = min(M, 2 * max(u0.values.max(), u1.values.max())) if math.isfinite(M) else 2 * max(u0.values.max(), u1.values.max())
    for _ in range(n_random):
        r = rng.uniform(0.05, 1.0, nr) * top
        if math.isfinite(M):
            r = np.minimum(r, M * (1 - 1e-6))
        starts.append(np.concatenate([r, rng.normal(scale=np.abs(lin_F).max() + 1e-3, size=nf)]))
    best, best_z = np.inf, None
    for z0 in starts:
        try:
            res = optimize.minimize(action, z0, jac=action_grad, hess=optimize.BFGS(), method="trust-constr",
                                    bounds=bounds,
                                    constraints=[optimize.LinearConstraint(Jr, -br, -br)],
                                    options={"gtol": 1e-13, "xtol": 1e-15, "maxiter": 3000})
        except (ValueError, np.linalg.LinAlgError):
            continue
        if res.success or np.max(np.abs(cons(res.x))) < 1e-10:
            val = action(res.x)
            if np.max(np.abs(cons(res.x))) < 1e-9 and val < best:
                best, best_z = val, res.x
    if best_z is None:
        return OracleResult(math.nan, math.inf, False, len(starts))
    # KKT residual with least-squares equality multipliers
    g = action_grad(best_z)
    lam, *_ = np.linalg.lstsq(Jc.T, -g, rcond=None)
    kkt = float(np.max(np.abs(g + Jc.T @ lam)))
    return OracleResult(math.sqrt(max(best, 0.0)), kkt, kkt < 1e-10, len(starts))
