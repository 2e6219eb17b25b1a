"""Minimizing-movement stepper and trajectories.

One step solves ``min_v W(u_prev, v)^2 / (2 tau) + E[v]`` over admissible ``v``.

* ``backend.kind == "dynamic"``: joint Newton-barrier over the path slices and
  ``v`` (cumulative-mass variables, see :mod:`jkoflow.metric`), or the bilevel
  variant (projected gradient on ``v``, inner distance solves).
* ``backend.kind == "frozen"``: the mobility is frozen at ``u_prev``, giving a
  single smooth problem with a pentadiagonal Hessian.

Every step is certified: the barrier-free objective of the returned iterate is
compared with ``E[u_prev]`` and the step is rejected (``v = u_prev``) if it is
not smaller.  Energies therefore never increase.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import InnerSolverFailure, OutOfRange
from .functionals import EnergyValue, energy, entropy_functional
from .grid import Density, project_admissible
from .metric import (
    LIFT,
    MetricBackend,
    NewtonOptions,
    PathProblem,
    _lift,
    cumulative,
    distance_dynamic,
    frozen_weight,
    newton_barrier,
)
from .physics import ProblemSpec


@dataclass(frozen=True)
class JkoConfig:
    tau: float
    T_final: float
    backend: MetricBackend = field(default_factory=MetricBackend)
    solver: str = "joint"  # "joint" | "bilevel"
    max_outer: int = 200  # bilevel only
    grad_tol: float = 1e-8
    eps_V: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.T_final >= self.tau * (1 - 1e-12):
            raise ValueError("T_final must be >= tau")
        if self.solver not in ("joint", "bilevel"):
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.T_final / self.tau - 1e-9))


@dataclass
class StepRecord:
    n: int
    t: float
    W: float
    energy: EnergyValue
    entropy: float
    psi: float
    status: str  # converged | descent_only | rejected
    iterations: int = 0
    stationarity: float = 0.0
    duality_gap: float = 0.0
    floored_faces: int = 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["energy"] = {"dirichlet": self.energy.dirichlet, "potential": self.energy.potential,
                       "total": self.energy.total}
        return d


@dataclass
class StepResult:
    u_next: Density
    record: StepRecord


def _psi(u_prev, v, W2, tau, spec):
    return W2 / (2.0 * tau) + energy(v, spec).total


def jko_step(u_prev: Density, cfg: JkoConfig, spec: ProblemSpec, n: int = 1) -> StepResult:
    grid = u_prev.grid
    e_prev = energy(u_prev, spec)
    if not math.isfinite(e_prev.total):
        raise InnerSolverFailure("previous iterate has infinite energy")
    if cfg.backend.kind == "dynamic" and cfg.solver == "bilevel":
        v, W2, iters, stat, gap, floored = _bilevel(u_prev, cfg, spec)
        status = "converged" if stat <= cfg.grad_tol * (1 + abs(e_prev.total)) else "descent_only"
    else:
        v, W2, info, floored = _joint(u_prev, cfg, spec)
        iters, stat = info.iterations, info.decrement
        gap = info.mu * grid.length * (cfg.backend.K if cfg.backend.kind == "dynamic" else 1)
        ok = not info.degraded and stat <= cfg.grad_tol * (1 + abs(e_prev.total))
        status = "converged" if ok else "descent_only"
    psi = _psi(u_prev, v, W2, cfg.tau, spec) if v is not None else math.inf
    if not (psi <= e_prev.total) or v is None:
        # a converged step within rounding of E[u_prev] is a fixed point, not a failure
        at_rest = v is not None and status == "converged" and psi - e_prev.total <= 1e-14 * (1 + abs(e_prev.total))
        v, W2, psi = u_prev, 0.0, e_prev.total
        if not at_rest:
            status = "rejected"
    rec = StepRecord(
        n=n, t=n * cfg.tau, W=math.sqrt(W2), energy=energy(v, spec), entropy=entropy_functional(v, spec),
        psi=psi, status=status, iterations=iters, stationarity=stat, duality_gap=gap, floored_faces=floored,
    )
    return StepResult(v, rec)


def _joint(u_prev: Density, cfg: JkoConfig, spec: ProblemSpec):
    grid = u_prev.grid
    Q0 = cumulative(u_prev.values, grid.h)
    floored = 0
    if cfg.backend.kind == "frozen":
        w, floored = frozen_weight(u_prev, spec.mobility, spec.s0)
        prob = PathProblem(grid, spec.mobility, 1, Q0, None, 1.0 / (2 * cfg.tau), spec.free_energy, frozen_weight=w)
    else:
        prob = PathProblem(grid, spec.mobility, cfg.backend.K, Q0, None, 1.0 / (2 * cfg.tau), spec.free_energy)
    start = _lift(Q0, grid, spec.s0, spec.M)
    prob.Q[1:] = start
    scale = max(abs(energy(u_prev, spec).total), 1e-3)
    info = newton_barrier(prob, cfg.backend.options, scale=scale)
    v_vals = prob.rho()[-1]
    if not (np.all(v_vals >= 0) and np.all(v_vals <= spec.M)):
        return None, 0.0, info, floored
    W2 = prob.action()
    return Density(v_vals, grid), W2, info, floored


def _action_grad_last(prob: PathProblem) -> np.ndarray:
    """Gradient of the action with respect to the last slice (envelope theorem)."""
    h, K, n = prob.h, prob.K, prob.n
    b, a = prob.terms(prob.Q)
    b, a = b.ravel(), a.ravel()
    m = np.asarray(prob.mob.m(a), float)
    dm = np.asarray(prob.mob.dm(a), float)
    w = h * K
    fb = 2 * w * b / m
    fa = -w * b * b * dm / m**2
    vals = np.outer(prob.beta, fb) + np.outer(prob.alpha, fa)
    gQ = np.bincount(prob.slot_flat.ravel(), vals.ravel(), minlength=(K + 1) * (n + 1)).reshape(K + 1, n + 1)
    return gQ[K]


def _bilevel(u_prev: Density, cfg: JkoConfig, spec: ProblemSpec):
    """Projected gradient on ``v`` with inner convex distance solves."""
    grid, tau, K = u_prev.grid, cfg.tau, cfg.backend.K
    h = grid.h
    G = spec.free_energy

    def evaluate(v):
        vd = Density(v, grid)
        res = distance_dynamic(u_prev, vd, K, spec, cfg.backend.options)
        W2 = res.value**2
        f = W2 / (2 * tau) + energy(vd, spec).total
        prob = PathProblem(grid, spec.mobility, K, cumulative(u_prev.values, h), cumulative(v, h))
        prob.Q[:] = np.vstack([cumulative(r, h) for r in res.path.rho])
        prob.Q[:, -1] = prob.Q[0, -1]
        gq = _action_grad_last(prob) / (2 * tau)
        # dQ_j / dv_i = h for j > i
        g_act = h * np.cumsum(gq[::-1])[::-1][1:]
        g_e = -h * grid.lap(v) + h * np.asarray(G.dG(np.clip(v, 1e-300, None)), float)
        return f, (g_act + g_e) / h, W2

    v = u_prev.values.copy()
    f, g, W2 = evaluate(v)
    step = 1e-3 * tau
    stat = math.inf
    it = 0
    for it in range(1, cfg.max_outer + 1):
        trial_ok = False
        for _ in range(40):
            cand = project_admissible(v - step * g, grid, spec.M, u_prev.mass).values
            fc, gc, W2c = evaluate(cand)
            if fc <= f - 1e-4 / step * float(np.sum((cand - v) ** 2)) * h:
                trial_ok = True
                break
            step *= 0.5
        if not trial_ok:
            break
        s, y = cand - v, gc - g
        v, f, g, W2 = cand, fc, gc, W2c
        pg = v - project_admissible(v - g, grid, spec.M, u_prev.mass).values
        stat = math.sqrt(h * float(pg @ pg))
        if stat <= cfg.grad_tol * (1 + abs(f)):
            break
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else 2 * step
    return Density(v, grid), W2, it, stat, 0.0, 0


# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    tau: float
    iterates: list
    records: list
    spec: ProblemSpec = field(repr=False)
    config: Optional[JkoConfig] = None

    @property
    def grid(self):
        return self.iterates[0].grid

    @property
    def n_steps(self) -> int:
        return len(self.iterates) - 1

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.iterates))

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy.total for r in self.records])

    @property
    def entropies(self) -> np.ndarray:
        return np.array([r.entropy for r in self.records])

    @property
    def distances(self) -> np.ndarray:
        return np.array([r.W for r in self.records[1:]])

    def values(self) -> np.ndarray:
        return np.vstack([u.values for u in self.iterates])

    def interpolant(self, t: float) -> Density:
        return interpolant(self, t)


def interpolant(traj: Trajectory, t: float) -> Density:
    """Piecewise-constant interpolant, right-continuous at the step times."""
    T = traj.tau * traj.n_steps
    if t < 0 or t > T * (1 + 1e-12) + 1e-15:
        raise OutOfRange(f"t = {t} outside [0, {T}]")
    if t == 0:
        return traj.iterates[0]
    n = int(math.ceil(t / traj.tau - 1e-9))
    return traj.iterates[min(max(n, 1), traj.n_steps)]


def initial_record(u0: Density, spec: ProblemSpec) -> StepRecord:
    e = energy(u0, spec)
    return StepRecord(0, 0.0, 0.0, e, entropy_functional(u0, spec), e.total, "initial")


def run(u0: Density, cfg: JkoConfig, spec: ProblemSpec, callback=None) -> Trajectory:
    if cfg.delta > 0 and spec.delta != cfg.delta:
        spec = spec.regularized(cfg.delta)
    if not math.isfinite(energy(u0, spec).total):
        raise InnerSolverFailure("initial datum has infinite energy")
    traj = Trajectory(cfg.tau, [u0], [initial_record(u0, spec)], spec, cfg)
    u = u0
    for n in range(1, cfg.n_steps + 1):
        res = jko_step(u, cfg, spec, n)
        u = res.u_next
        traj.iterates.append(u)
        traj.records.append(res.record)
        if callback is not None:
            callback(traj)
    return traj


__all__ = [
    "JkoConfig", "StepRecord", "StepResult", "Trajectory", "jko_step", "run", "interpolant",
    "MetricBackend", "NewtonOptions", "LIFT",
]
