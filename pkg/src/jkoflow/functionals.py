"""Discrete energy, entropy and potential functionals, and the explicit
constants that appear in the a-priori estimates.

All integrals are midpoint sums over cells (``h * sum``) or over interior
faces for gradient terms.  Out-of-domain densities return ``+inf`` instead of
raising so that solvers can treat them as rejections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import Density, Grid
from .physics import ProblemSpec, mobility_lower_bound


@dataclass(frozen=True)
class EnergyValue:
    dirichlet: float
    potential: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.potential


def _in_domain(v, M) -> bool:
    return bool(np.all(v >= 0.0) and np.all(v <= M))


def dirichlet(u: Density) -> float:
    g = u.grid.grad(u.values)
    return 0.5 * u.grid.h * float(g @ g)


def energy(u: Density, spec: ProblemSpec) -> EnergyValue:
    v = u.values
    if not _in_domain(v, spec.M):
        return EnergyValue(math.inf, math.inf)
    with np.errstate(all="ignore"):
        pot = u.grid.h * float(np.sum(spec.free_energy.G(v)))
    if not math.isfinite(pot):
        pot = math.inf
    return EnergyValue(dirichlet(u), pot)


def normalized_energy(u: Density, spec: ProblemSpec) -> float:
    """Energy with ``G`` replaced by ``G - G(s0) - G'(s0)(s - s0)``.

    On densities of mass ``s0 * L`` this differs from :func:`energy` by the
    constant ``L * G(s0)``; the estimates are stated for this normalisation.
    """
    return energy(u, spec).total - u.grid.length * float(spec.free_energy.G(spec.s0))


def entropy_functional(u: Density, spec: ProblemSpec) -> float:
    v = u.values
    if not _in_domain(v, spec.M):
        return math.inf
    with np.errstate(all="ignore"):
        vals = np.asarray(spec.entropy.U(v), float)
    vals = np.where(np.isnan(vals), np.inf, vals)
    return max(u.grid.h * float(np.sum(vals)), 0.0)


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class EstimateConstants:
    """Explicit constants of the a-priori estimates on ``(0, L)``.

    Gagliardo-Nirenberg on an interval: ``|u|_2 <= C1 |Du|_2^(1/3) |u|_1^(2/3) + C2 |u|_1``
    with ``C1 = 2`` and ``C2 = 2/sqrt(L)``.
    """

    length: float
    mass: float
    conc: float  # C with G_conc >= -C (1 + s^2)
    m0: float  # m(s0)
    s0: float
    M: float
    C_G: float

    C1 = 2.0
    theta = 1.0 / 3.0

    @property
    def C2(self) -> float:
        return 2.0 / math.sqrt(self.length)

    def c3(self, eps: float) -> float:
        return (2.0 * self.C1 / eps) ** (1.0 / (1.0 - self.theta)) + self.C2

    @cached_property
    def E0(self) -> float:
        C, L, m = self.conc, self.length, self.mass
        first = 0.0 if C == 0.0 else C * (L + 2.0 * self.c3(1.0 / (2.0 * math.sqrt(2.0 * C))) ** 2 * m**2)
        return first + 0.25 * self.c3(1.0 / math.sqrt(2.0)) ** 2 * m**2

    @cached_property
    def entropy_C(self) -> float:
        """``U[u] <= C (1 + |u|_2^2)``."""
        L, s0, m0 = self.length, self.s0, self.m0
        c0 = s0**2 / m0
        if math.isfinite(self.M):
            return L * max(c0, (self.M - s0) ** 2 / m0)
        return max(L * c0, 1.0 / (2.0 * m0))

    @cached_property
    def entropy_energy_C(self) -> float:
        """``U[u] <= C (E[u] + E0)``, using ``E + E0 >= |u|^2/8 >= mass^2 / (8 L)``."""
        return 8.0 * self.entropy_C * (1.0 + self.length / self.mass**2)

    @cached_property
    def heat_C(self) -> float:
        """Constant of the lower bound on the energy dissipation along the heat flow.

        ``-dE/ds >= |Lap v|^2 / 2 - C (E0 + E[v])``.
        """
        L, m0 = self.length, self.m0
        a = math.sqrt(9.0 * L / 16.0)  # |D sqrt v|_2^2 <= a |Lap v|_2
        if math.isfinite(self.M):
            b = 4.0 * self.C_G * self.M * a / m0
            return 4.0 * L * b**2 / self.mass**2
        b = 4.0 * self.C_G * self.s0 * a / m0
        return 4.0 * L * b**2 / self.mass**2 + 8.0 * self.C_G * (1.0 + 1.0 / m0)

    def as_dict(self) -> dict:
        return {
            "C1": self.C1, "C2": self.C2, "theta": self.theta,
            "E0": self.E0, "entropy_C": self.entropy_C,
            "entropy_energy_C": self.entropy_energy_C, "heat_C": self.heat_C,
            "C_conc": self.conc, "C_G": self.C_G, "m0": self.m0,
        }


def estimate_constants(spec: ProblemSpec) -> EstimateConstants:
    return EstimateConstants(
        length=spec.length,
        mass=spec.mass,
        conc=spec.split.conc_constant,
        m0=float(spec.mobility.m(spec.s0)),
        s0=spec.s0,
        M=spec.M,
        C_G=spec.hypotheses["C_G"],
    )


@dataclass
class BoundReport:
    name: str
    lhs: float
    rhs: float
    passed: bool
    constants: dict

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


def h1_norm_sq(u: Density) -> float:
    return u.grid.h * float(u.values @ u.values) + 2.0 * dirichlet(u)


def energy_lower_bound_check(u: Density, spec: ProblemSpec, tol: float = 1e-10) -> BoundReport:
    """``|u|_{H1}^2 / 8 + int G_conv(u) <= E[u] + E0`` (normalised energy)."""
    c = estimate_constants(spec)
    lhs = h1_norm_sq(u) / 8.0 + u.grid.h * float(np.sum(spec.split.conv(u.values)))
    rhs = normalized_energy(u, spec) + c.E0
    return BoundReport("energy_lower_bound", lhs, rhs, bool(rhs - lhs >= -tol), {"E0": c.E0})


# ---------------------------------------------------------------------------
# potentials


class TestPotential:
    """Cell samples of a smooth potential with zero normal derivative.

    Built from a cosine series (``TestPotential.cosine``) or from arbitrary
    samples; the discrete gradient on the boundary faces is zero by construction.
    """

    __test__ = False  # not a pytest class

    def __init__(self, values, grid: Grid):
        self.grid = grid
        self.V = np.array(values, dtype=float)
        if self.V.shape != (grid.n_cells,):
            raise ValueError("potential must have one value per cell")
        self.V.setflags(write=False)

    @classmethod
    def cosine(cls, grid: Grid, coeffs=(0.0, 1.0)) -> "TestPotential":
        x = grid.cell_centers
        V = sum(c * np.cos(k * np.pi * x / grid.length) for k, c in enumerate(coeffs))
        return cls(V, grid)

    @classmethod
    def constant(cls, grid: Grid, c: float = 1.0) -> "TestPotential":
        return cls(np.full(grid.n_cells, c), grid)

    @cached_property
    def grad(self) -> np.ndarray:
        return self.grid.grad(self.V)

    @cached_property
    def lap(self) -> np.ndarray:
        return self.grid.lap(self.V)

    def __add__(self, other: "TestPotential") -> "TestPotential":
        return TestPotential(self.V + other.V, self.grid)

    def __mul__(self, a: float) -> "TestPotential":
        return TestPotential(a * self.V, self.grid)

    __rmul__ = __mul__


def potential_functional(u: Density, V: TestPotential) -> float:
    return u.grid.h * float(V.V @ u.values)


def regularized_potential(u: Density, V: TestPotential, eps: float, spec: ProblemSpec) -> float:
    if eps == 0.0:
        return potential_functional(u, V)
    return potential_functional(u, V) + eps * entropy_functional(u, spec)


def weak_form_N(u: Density, V: TestPotential, spec: ProblemSpec) -> float:
    """``N[u, V] = -int Lap u div(m(u) DV) + int P(u) Lap V``."""
    g = u.grid
    mface = np.asarray(spec.mobility.m(g.face_average(u.values)), float)
    flux = mface * V.grad
    t1 = -g.h * float(g.lap(u.values) @ g.div(flux))
    t2 = g.h * float(np.asarray(spec.pressure(u.values), float) @ V.lap)
    return t1 + t2


def concavity_bound_holds(spec: ProblemSpec, s) -> bool:
    """Dense-sample check of the concavity lower bound on ``m``."""
    s = np.asarray(s, float)
    return bool(np.all(spec.mobility.m(s) >= mobility_lower_bound(spec.mobility, spec.s0, s) * (1 - 1e-12) - 1e-15))
