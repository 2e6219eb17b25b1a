"""Mobilities, free energies, pressures and entropy densities.

Everything here is a plain function of the density value ``s``.  Callables
accept scalars or numpy arrays.  Hypothesis checks are numerical: they sample
the functions on dense grids and on geometric ladders towards the endpoints
and return a :class:`HypothesisReport` instead of raising.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline
from scipy.special import xlogy

from .errors import DeltaTooLarge, QuadratureFailure

INF = math.inf
Func = Callable[[np.ndarray], np.ndarray]

# geometric ladder used for asymptotic checks when M = inf
LADDER_MAX = 1e6
QUAD_TOL = 1e-8


def _fd_derivative(f: Func, order: int) -> Func:
    def d(s):
        s = np.asarray(s, dtype=float)
        eps = 1e-5 * np.maximum(np.abs(s), 1e-3)
        if order == 1:
            return (f(s + eps) - f(s - eps)) / (2 * eps)
        return (f(s + eps) - 2 * f(s) + f(s - eps)) / eps**2

    return d


@dataclass(frozen=True)
class Mobility:
    m: Func
    dm: Func
    d2m: Func
    M: float = INF
    tag: str = "custom"
    params: dict = field(default_factory=dict)
    poly: Optional[Polynomial] = field(default=None, repr=False, compare=False)

    def __call__(self, s):
        return self.m(s)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.M)

    def describe(self) -> dict:
        return {"tag": self.tag, "M": self.M, **self.params}


def _clip(s, M):
    return np.clip(np.asarray(s, dtype=float), 0.0, M)


def wasserstein() -> Mobility:
    return Mobility(
        m=lambda s: _clip(s, INF),
        dm=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        d2m=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        M=INF,
        tag="wasserstein",
        poly=Polynomial([0.0, 1.0]),
    )


def quadratic(M: float = 1.0) -> Mobility:
    """``m(s) = s (M - s)``; the Cahn-Hilliard mobility for ``M = 1``."""
    return Mobility(
        m=lambda s: _clip(s, M) * (M - _clip(s, M)),
        dm=lambda s: M - 2.0 * np.asarray(s, dtype=float),
        d2m=lambda s: np.full_like(np.asarray(s, dtype=float), -2.0),
        M=float(M),
        tag="quadratic",
        params={},
        poly=Polynomial([0.0, M, -1.0]),
    )


def power(alpha: float) -> Mobility:
    if not 0 < alpha <= 1:
        warnings.warn(f"power mobility with alpha={alpha} is not concave", stacklevel=2)
    if alpha == 1:
        return replace(wasserstein(), tag="power", params={"alpha": 1.0})

    def m(s):
        return _clip(s, INF) ** alpha

    def dm(s):
        s = _clip(s, INF)
        with np.errstate(divide="ignore"):
            return alpha * s ** (alpha - 1.0)

    def d2m(s):
        s = _clip(s, INF)
        with np.errstate(divide="ignore"):
            return alpha * (alpha - 1.0) * s ** (alpha - 2.0)

    return Mobility(m, dm, d2m, INF, "power", {"alpha": float(alpha)})


def power_product(alpha0: float, alpha1: float, M: float = 1.0) -> Mobility:
    """``m(s) = s^alpha0 (M - s)^alpha1``."""
    a0, a1 = float(alpha0), float(alpha1)

    def m(s):
        s = _clip(s, M)
        return s**a0 * (M - s) ** a1

    def dm(s):
        s = _clip(s, M)
        with np.errstate(divide="ignore", invalid="ignore"):
            return m(s) * (a0 / s - a1 / (M - s))

    def d2m(s):
        s = _clip(s, M)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = a0 / s - a1 / (M - s)
            return m(s) * (r**2 - a0 / s**2 - a1 / (M - s) ** 2)

    poly = None
    if a0 == 1.0 and a1 == 1.0:
        poly = Polynomial([0.0, M, -1.0])
    return Mobility(m, dm, d2m, float(M), "power_product", {"alpha0": a0, "alpha1": a1}, poly)


def constant(value: float = 1.0) -> Mobility:
    """Constant mobility.  Outside the concave/degenerate class; used only to
    validate solvers against linear problems."""
    c = float(value)
    return Mobility(
        m=lambda s: np.full_like(np.asarray(s, dtype=float), c),
        dm=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        d2m=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        M=INF,
        tag="constant",
        params={"value": c},
        poly=Polynomial([c]),
    )


def custom(m: Func, M: float = INF, dm: Optional[Func] = None, d2m: Optional[Func] = None) -> Mobility:
    return Mobility(m, dm or _fd_derivative(m, 1), d2m or _fd_derivative(m, 2), float(M), "custom")


def tabulated(s, values, M: float = INF) -> Mobility:
    spline = CubicSpline(np.asarray(s, float), np.asarray(values, float))
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return Mobility(
        m=lambda x: spline(np.asarray(x, float)),
        dm=lambda x: d1(np.asarray(x, float)),
        d2m=lambda x: d2(np.asarray(x, float)),
        M=float(M),
        tag="tabulated",
    )


MOBILITY_CATALOG = {
    "wasserstein": wasserstein,
    "quadratic": quadratic,
    "power": power,
    "power_product": power_product,
    "constant": constant,
}


# ---------------------------------------------------------------------------
# free energies


@dataclass(frozen=True)
class FreeEnergy:
    G: Func
    dG: Func
    d2G: Func
    tag: str = "custom"
    params: dict = field(default_factory=dict)
    d2_poly: Optional[Polynomial] = field(default=None, repr=False, compare=False)
    # roots of G'' help adaptive quadrature of the convex/concave split
    breakpoints: tuple = ()

    def describe(self) -> dict:
        return {"tag": self.tag, **self.params}


def zero_energy() -> FreeEnergy:
    z = lambda s: np.zeros_like(np.asarray(s, dtype=float))  # noqa: E731
    return FreeEnergy(z, z, z, "zero", {}, Polynomial([0.0]))


def quadratic_energy(c: float) -> FreeEnergy:
    c = float(c)
    return FreeEnergy(
        G=lambda s: 0.5 * c * np.asarray(s, float) ** 2,
        dG=lambda s: c * np.asarray(s, float),
        d2G=lambda s: np.full_like(np.asarray(s, float), c),
        tag="quadratic",
        params={"c": c},
        d2_poly=Polynomial([c]),
    )


def double_well(theta: float = 1.0) -> FreeEnergy:
    """``G(s) = theta s^2 (1 - s)^2``."""
    t = float(theta)
    r = 0.5 - 0.5 / math.sqrt(3.0)
    return FreeEnergy(
        G=lambda s: t * np.asarray(s, float) ** 2 * (1 - np.asarray(s, float)) ** 2,
        dG=lambda s: 2 * t * np.asarray(s, float) * (1 - np.asarray(s, float)) * (1 - 2 * np.asarray(s, float)),
        d2G=lambda s: t * (2 - 12 * np.asarray(s, float) + 12 * np.asarray(s, float) ** 2),
        tag="double_well",
        params={"theta": t},
        d2_poly=Polynomial([2 * t, -12 * t, 12 * t]),
        breakpoints=(r, 1 - r),
    )


def logarithmic(theta: float = 1.0) -> FreeEnergy:
    """``G(s) = theta (s log s + (1 - s) log(1 - s))``."""
    t = float(theta)

    def G(s):
        s = np.clip(np.asarray(s, float), 0.0, 1.0)
        return t * (xlogy(s, s) + xlogy(1 - s, 1 - s))

    def dG(s):
        s = np.asarray(s, float)
        with np.errstate(divide="ignore"):
            return t * (np.log(s) - np.log1p(-s))

    def d2G(s):
        s = np.asarray(s, float)
        with np.errstate(divide="ignore"):
            return t / (s * (1 - s))

    return FreeEnergy(G, dG, d2G, "logarithmic", {"theta": t})


def thin_film_energy(alpha: float, beta: float, kappa: float) -> FreeEnergy:
    """Energy density whose pressure is ``kappa s^beta`` for ``m = s^alpha``."""
    a, b, k = float(alpha), float(beta), float(kappa)
    params = {"alpha": a, "beta": b, "kappa": k}
    if k == 0.0:
        return replace(zero_energy(), tag="thin_film", params=params)
    p = b - a + 1.0
    if abs(b - a) < 1e-14:

        def G(s):
            s = np.clip(np.asarray(s, float), 0.0, None)
            return k * b * (xlogy(s, s) - s)

        def dG(s):
            with np.errstate(divide="ignore"):
                return k * b * np.log(np.asarray(s, float))

    else:
        c = k * b / ((b - a) * p)

        def G(s):
            return c * np.clip(np.asarray(s, float), 0.0, None) ** p

        def dG(s):
            with np.errstate(divide="ignore"):
                return c * p * np.clip(np.asarray(s, float), 0.0, None) ** (p - 1.0)

    def d2G(s):
        with np.errstate(divide="ignore"):
            return k * b * np.clip(np.asarray(s, float), 0.0, None) ** (b - a - 1.0)

    return FreeEnergy(G, dG, d2G, "thin_film", params)


def tabulated_energy(s, values) -> FreeEnergy:
    spline = CubicSpline(np.asarray(s, float), np.asarray(values, float))
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return FreeEnergy(
        lambda x: spline(np.asarray(x, float)),
        lambda x: d1(np.asarray(x, float)),
        lambda x: d2(np.asarray(x, float)),
        "tabulated",
    )


ENERGY_CATALOG = {
    "zero": zero_energy,
    "quadratic": quadratic_energy,
    "double_well": double_well,
    "logarithmic": logarithmic,
    "thin_film": thin_film_energy,
}


# ---------------------------------------------------------------------------
# sampling helpers


def sample_points(M: float, n: int = 2001) -> np.ndarray:
    """Dense interior sample of (0, M) including geometric endpoint ladders."""
    ladder = np.logspace(-8, -2, 61)
    if math.isfinite(M):
        t = np.linspace(0.0, 1.0, n)[1:-1] * M
        pts = np.concatenate([ladder * M, t, M - ladder * M])
    else:
        pts = np.concatenate([ladder, np.linspace(0.0, 10.0, n)[1:], np.logspace(1, np.log10(LADDER_MAX), 200)])
    pts = np.unique(pts)
    return pts[(pts > 0) & (pts < M)]


def _vectorize_quad(fun: Callable[[float], float]):
    vec = np.vectorize(fun, otypes=[float])

    def call(s):
        s = np.asarray(s, float)
        out = vec(s)
        return out if out.ndim else float(out)

    return call


def _quad(f, a, b, points=None):
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    pts = None
    if points:
        pts = [p for p in points if lo < p < hi] or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(f, lo, hi, points=pts, limit=200, epsabs=1e-13, epsrel=1e-12)
    if not np.isfinite(val):
        return math.copysign(INF, val) if b > a else -math.copysign(INF, val)
    if err > QUAD_TOL * max(1.0, abs(val)):
        raise QuadratureFailure(f"quadrature on [{lo}, {hi}] did not converge (err={err:.2e})")
    return val if b > a else -val


# ---------------------------------------------------------------------------
# entropy density


@dataclass(frozen=True)
class EntropyDensity:
    """``U`` with ``U'' = 1/m`` and ``U(s0) = U'(s0) = 0``."""

    U: Func
    dU: Func
    s0: float
    mode: str  # "closed-form" or "quadrature"
    mobility: Mobility = field(repr=False)

    def __call__(self, s):
        return self.U(s)

    def d2U(self, s):
        return 1.0 / self.mobility.m(s)


def entropy_density(m: Mobility, s0: float) -> EntropyDensity:
    if not 0 < s0 < m.M:
        raise ValueError(f"s0 = {s0} must lie in (0, M)")
    tag = m.tag
    alpha = m.params.get("alpha")

    def normalized(phi, dphi):
        p0, d0 = float(phi(s0)), float(dphi(s0))

        def U(s):
            s = np.asarray(s, float)
            return phi(s) - p0 - d0 * (s - s0)

        def dU(s):
            return dphi(np.asarray(s, float)) - d0

        return U, dU

    if tag == "wasserstein" or (tag == "power" and alpha == 1.0):
        phi = lambda s: xlogy(s, s) - s  # noqa: E731
        with np.errstate(divide="ignore"):
            U, dU = normalized(phi, lambda s: np.log(s))
        return EntropyDensity(U, dU, s0, "closed-form", m)
    if tag == "quadratic" or (tag == "power_product" and m.params == {"alpha0": 1.0, "alpha1": 1.0}):
        M = m.M

        def phi(s):
            s = np.clip(s, 0.0, M)
            return (xlogy(s, s) + xlogy(M - s, M - s)) / M

        def dphi(s):
            with np.errstate(divide="ignore"):
                return (np.log(s) - np.log(M - s)) / M

        U, dU = normalized(phi, dphi)
        return EntropyDensity(U, dU, s0, "closed-form", m)
    if tag == "power" and alpha is not None and alpha < 1.0:
        a = alpha

        def phi(s):
            return np.clip(s, 0.0, None) ** (2 - a) / ((1 - a) * (2 - a))

        def dphi(s):
            return np.clip(s, 0.0, None) ** (1 - a) / (1 - a)

        U, dU = normalized(phi, dphi)
        return EntropyDensity(U, dU, s0, "closed-form", m)
    if tag == "constant":
        c = m.params["value"]
        return EntropyDensity(
            lambda s: 0.5 * (np.asarray(s, float) - s0) ** 2 / c,
            lambda s: (np.asarray(s, float) - s0) / c,
            s0,
            "closed-form",
            m,
        )

    # adaptive quadrature: U(s) = s F(s) - int_{s0}^s r / m(r) dr,  F = int 1/m
    def inv_m(r):
        return 1.0 / float(m.m(r))

    def r_over_m(r):
        return r / float(m.m(r))

    def U_scalar(s):
        if s == s0:
            return 0.0
        try:
            return _quad(lambda r: (s - r) / float(m.m(r)), s0, s)
        except QuadratureFailure:
            return s * _quad(inv_m, s0, s) - _quad(r_over_m, s0, s)

    def dU_scalar(s):
        return _quad(inv_m, s0, s)

    return EntropyDensity(_vectorize_quad(U_scalar), _vectorize_quad(dU_scalar), s0, "quadrature", m)


# ---------------------------------------------------------------------------
# problem specification


def _poly_pressure(mob: Mobility, G: FreeEnergy) -> Optional[Callable]:
    if mob.poly is None or G.d2_poly is None:
        return None
    P = (mob.poly * G.d2_poly).integ(lbnd=0.0)
    return lambda s: P(np.asarray(s, float))


def _closed_pressure(mob: Mobility, G: FreeEnergy) -> Optional[Callable]:
    p = _poly_pressure(mob, G)
    if p is not None:
        return p
    if G.tag == "zero" or (G.tag == "thin_film" and G.params["kappa"] == 0.0):
        return lambda s: np.zeros_like(np.asarray(s, float))
    if G.tag == "logarithmic" and mob.tag == "quadratic" and mob.M == 1.0:
        t = G.params["theta"]
        return lambda s: t * np.asarray(s, float)
    if G.tag == "thin_film" and mob.tag == "power" and mob.params["alpha"] == G.params["alpha"]:
        k, b = G.params["kappa"], G.params["beta"]
        return lambda s: k * np.clip(np.asarray(s, float), 0.0, None) ** b
    return None


class TabulatedPressure:
    """``P(s) = int_0^s m G''`` tabulated by piecewise adaptive quadrature.

    Values beyond the table fall back to direct quadrature.
    """

    def __init__(self, mob: Mobility, G: FreeEnergy, s_max: float, n: int = 1025):
        self.integrand = lambda r: float(mob.m(r) * G.d2G(r))
        self.s = np.linspace(0.0, s_max, n)
        pieces = [_quad(self.integrand, a, b, G.breakpoints) for a, b in zip(self.s[:-1], self.s[1:])]
        self.values = np.concatenate([[0.0], np.cumsum(pieces)])
        self.spline = CubicSpline(self.s, self.values)
        self.breakpoints = G.breakpoints

    def __call__(self, s):
        s = np.asarray(s, float)
        out = np.asarray(self.spline(np.clip(s, 0.0, self.s[-1])), float)
        far = s > self.s[-1]
        if np.any(far):
            out = out.copy()
            base = self.values[-1]
            out[far] = [base + _quad(self.integrand, self.s[-1], x, self.breakpoints) for x in s[far]]
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class ProblemSpec:
    """Mobility, free energy, mass and domain length bundled together."""

    mobility: Mobility
    free_energy: FreeEnergy
    mass: float
    length: float = 1.0
    pressure: Optional[Callable] = field(default=None, repr=False, compare=False)
    delta: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        s0 = self.mass / self.length
        if not 0 < s0 < self.mobility.M:
            raise ValueError(f"mean density {s0} must lie in (0, M={self.mobility.M})")
        if self.pressure is None:
            P = _closed_pressure(self.mobility, self.free_energy)
            if P is None:
                s_max = self.mobility.M if self.mobility.bounded else max(10.0 * s0, 10.0)
                P = TabulatedPressure(self.mobility, self.free_energy, s_max)
            object.__setattr__(self, "pressure", P)

    @property
    def M(self) -> float:
        return self.mobility.M

    @property
    def s0(self) -> float:
        return self.mass / self.length

    @cached_property
    def entropy(self) -> EntropyDensity:
        return entropy_density(self.mobility, self.s0)

    @cached_property
    def split(self) -> "EnergySplit":
        return EnergySplit(self.free_energy, self.s0, self.M)

    @cached_property
    def hypotheses(self) -> dict:
        g = validate_G(self)
        return {
            "M": validate_M(self.mobility).passes,
            "LSC": validate_LSC(self.mobility).passes,
            "M_half": validate_M_half(self.mobility).passes,
            "G": g.passes,
            "C_G": g.values["C"],
            "q": g.values.get("q"),
        }

    @property
    def is_LSC(self) -> bool:
        return self.hypotheses["LSC"]

    @property
    def is_M_half(self) -> bool:
        return self.hypotheses["M_half"]

    @property
    def satisfies_G(self) -> bool:
        return self.hypotheses["G"]

    def regularized(self, delta: float) -> "ProblemSpec":
        """Same problem with mobility ``m_delta`` and pressure ``P_delta``."""
        mob = regularize_mobility(self.mobility, delta)
        spec = ProblemSpec(mob, self.free_energy, self.mass, self.length, pressure=None, delta=delta)
        if _closed_pressure(mob, self.free_energy) is None and not _is_zero_energy(self.free_energy):
            object.__setattr__(spec, "pressure", regularize_pressure(self, delta))
        return spec

    def describe(self) -> dict:
        return {
            "mobility": self.mobility.describe(),
            "energy": self.free_energy.describe(),
            "mass": self.mass,
            "length": self.length,
            "delta": self.delta,
        }


def _is_zero_energy(G: FreeEnergy) -> bool:
    return G.tag == "zero" or (G.tag == "thin_film" and G.params.get("kappa") == 0.0)


class EnergySplit:
    """Convex/concave decomposition of the normalised free energy.

    ``G_norm(s) = G(s) - G(s0) - G'(s0)(s - s0)`` is split as
    ``G_conv + G_conc`` with ``G_conc(s) = -int_{s0}^s L^-(r)(s - r) dr``.
    """

    def __init__(self, G: FreeEnergy, s0: float, M: float):
        self.G, self.s0, self.M = G, s0, M
        self._g0 = float(G.G(s0))
        self._dg0 = float(G.dG(s0))
        self.neg_part = lambda r: max(-float(G.d2G(r)), 0.0)
        self.pos_part = lambda r: max(float(G.d2G(r)), 0.0)
        self._conc = _vectorize_quad(self._conc_scalar)

    def normalized(self, s):
        s = np.asarray(s, float)
        return self.G.G(s) - self._g0 - self._dg0 * (s - self.s0)

    def _conc_scalar(self, s):
        if _is_zero_energy(self.G) or self.G.tag == "quadratic" and self.G.params["c"] >= 0:
            return 0.0
        if self.G.tag == "logarithmic" and self.G.params["theta"] >= 0:
            return 0.0
        return -_quad(lambda r: self.neg_part(r) * (s - r), self.s0, s, self.G.breakpoints)

    def conc(self, s):
        return self._conc(s)

    def conv(self, s):
        return self.normalized(s) - self.conc(s)

    @cached_property
    def conc_constant(self) -> float:
        """Smallest sampled ``C`` with ``G_conc(s) >= -C (1 + s^2)``."""
        pts = sample_points(self.M, 401)
        if not math.isfinite(self.M):
            pts = pts[pts <= 1e4]
        vals = self.conc(pts)
        return float(max(0.0, np.max(-vals / (1.0 + pts**2))))


# ---------------------------------------------------------------------------
# hypothesis validation


@dataclass
class HypothesisReport:
    name: str
    passes: bool
    witnesses: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "passes": self.passes, "witnesses": self.witnesses[:10], "values": self.values}


ENDPOINT_OFFSETS = np.logspace(-2, -8, 7)
# boundedness ladders go deeper: Lipschitz regularisations saturate only at tiny offsets
GROWTH_OFFSETS = np.logspace(-2, -14, 13)


def validate_M(m: Mobility, tol: float = 1e-10) -> HypothesisReport:
    """Positivity, concavity and vanishing endpoint limits."""
    s = sample_points(m.M)
    vals = np.asarray(m.m(s), float)
    witnesses = []
    bad = ~(vals > 0)
    witnesses += [("nonpositive", float(x)) for x in s[bad][:5]]
    a, b, c = s[:-2], s[1:-1], s[2:]
    interp = (vals[:-2] * (c - b) + vals[2:] * (b - a)) / (c - a)
    gap = vals[1:-1] - interp
    convex = gap < -tol * (1.0 + np.abs(vals[1:-1]))
    witnesses += [("convex", float(x)) for x in b[convex][:5]]
    scale = float(np.max(np.abs(vals))) if vals.size else 1.0
    ends = [ENDPOINT_OFFSETS]
    if m.bounded:
        ends.append(m.M - ENDPOINT_OFFSETS * m.M)
        ends[0] = ENDPOINT_OFFSETS * m.M
    limit_ok = True
    for ladder in ends:
        lv = np.abs(np.asarray(m.m(ladder), float))
        if not (np.all(np.diff(lv) <= 1e-15 * scale) and lv[-1] <= 1e-2 * scale):
            limit_ok = False
            witnesses.append(("nonvanishing_limit", float(ladder[-1])))
    passes = not bad.any() and not convex.any() and limit_ok
    return HypothesisReport("M", bool(passes), witnesses, {"max_m": scale})


def _no_growth(values: np.ndarray, rel: float = 1e-3) -> bool:
    """True if the last three decades of an endpoint ladder show no growth."""
    ref, last = values[-4], values[-1]
    return bool(np.isfinite(last) and last <= ref * (1.0 + rel) + 1e-12)


def validate_LSC(m: Mobility) -> HypothesisReport:
    """Numerical check of sup|m'| < inf and sup(-m'' m) < inf."""
    s = sample_points(m.M)
    with np.errstate(all="ignore"):
        lip = np.abs(np.asarray(m.dm(s), float))
        semi = -np.asarray(m.d2m(s), float) * np.asarray(m.m(s), float)
    witnesses = []
    ladders = [GROWTH_OFFSETS * (m.M if m.bounded else 1.0)]
    if m.bounded:
        ladders.append(m.M - GROWTH_OFFSETS * m.M)
    else:
        ladders.append(np.logspace(3, np.log10(LADDER_MAX), 7))
    ok = True
    for lad in ladders:
        with np.errstate(all="ignore"):
            l1 = np.abs(np.asarray(m.dm(lad), float))
            l2 = np.maximum(-np.asarray(m.d2m(lad), float) * np.asarray(m.m(lad), float), 0.0)
        for name, arr in (("lipschitz", l1), ("semiconvex", l2)):
            if not _no_growth(arr):
                ok = False
                witnesses.append((name, float(lad[-1])))
    finite = np.isfinite(lip).all() and np.isfinite(semi).all()
    values = {
        "sup_abs_dm": float(np.nanmax(lip)),
        "sup_semiconvexity": float(np.nanmax(semi)),
    }
    return HypothesisReport("M-LSC", bool(ok and finite), witnesses, values)


def validate_M_half(m: Mobility, min_slope: float = 0.05) -> HypothesisReport:
    """Check ``s^(1/2) m'(s) -> 0`` as ``s -> 0`` (and at ``M``).

    The product is sampled at offsets 1e-2 .. 1e-8.  It must be monotonically
    non-increasing and either drop below 1e-3 of its initial magnitude or decay
    like a power with log-log slope at least ``min_slope``.
    """
    d = ENDPOINT_OFFSETS * (m.M if m.bounded else 1.0)
    probes = [(d, np.sqrt(d) * np.abs(np.asarray(m.dm(d), float)))]
    if m.bounded:
        s = m.M - d
        probes.append((s, np.sqrt(d) * np.abs(np.asarray(m.dm(s), float))))
    ok, witnesses, values = True, [], {}
    for k, (pts, prod) in enumerate(probes):
        side = "left" if k == 0 else "right"
        values[f"{side}_products"] = prod.tolist()
        monotone = bool(np.all(np.diff(prod) <= 1e-12 * max(prod[0], 1e-300)))
        if prod[0] == 0.0:
            continue
        small = prod[-1] <= 1e-3 * prod[0]
        with np.errstate(divide="ignore"):
            slope = np.polyfit(np.log10(d[3:]), np.log10(np.maximum(prod[3:], 1e-300)), 1)[0]
        values[f"{side}_slope"] = float(slope)
        if not (monotone and (small or slope >= min_slope)):
            ok = False
            witnesses.append((side, float(pts[-1])))
    return HypothesisReport("M1/2", ok, witnesses, values)


def validate_G(spec: ProblemSpec, q_candidates=(2.01, 2.5, 3.0, 4.0, 6.0)) -> HypothesisReport:
    """Lower bound on ``m G''`` plus continuity/growth of the pressure."""
    m, G = spec.mobility, spec.free_energy
    s = sample_points(m.M)
    with np.errstate(all="ignore"):
        mg = np.asarray(m.m(s), float) * np.asarray(G.d2G(s), float)
    witnesses, values = [], {}
    if m.bounded:
        C = max(0.0, float(-np.nanmin(mg)))
        ladder_ok = True
        for lad in (GROWTH_OFFSETS * m.M, m.M - GROWTH_OFFSETS * m.M):
            with np.errstate(all="ignore"):
                neg = np.maximum(-np.asarray(m.m(lad) * G.d2G(lad), float), 0.0)
            if not _no_growth(neg):
                ladder_ok = False
                witnesses.append(("unbounded_below", float(lad[-1])))
        with np.errstate(all="ignore"):
            ends = np.asarray(spec.pressure(np.array([1e-12, m.M * (1 - 1e-12)])), float)
        p_ok = bool(np.all(np.isfinite(ends)))
        if not p_ok:
            witnesses.append(("pressure_discontinuous", m.M))
        passes = bool(np.isfinite(C) and ladder_ok and p_ok)
    else:
        with np.errstate(all="ignore"):
            ratio = -mg / (1.0 + np.asarray(m.m(s), float))
        C = max(0.0, float(np.nanmax(ratio)))
        big = np.logspace(3, np.log10(LADDER_MAX), 7)
        with np.errstate(all="ignore"):
            P = np.abs(np.asarray(spec.pressure(big), float))
            g = np.abs(np.asarray(G.G(big), float))
        q_found = None
        for q in q_candidates:
            r = P / (big**q + g)
            if r[-1] <= 1e-8 or (np.all(np.diff(r) <= 0) and r[-1] <= 1e-3 * max(r[0], 1e-300)):
                q_found = q
                break
        values["q"] = q_found
        with np.errstate(all="ignore"):
            p0 = float(np.asarray(spec.pressure(1e-12)))
        passes = bool(np.isfinite(C) and q_found is not None and np.isfinite(p0))
        if q_found is None:
            witnesses.append(("pressure_growth", float(big[-1])))
    values["C"] = C
    return HypothesisReport("G", passes, witnesses, values)


def mobility_lower_bound(m: Mobility, s0: float, s):
    """Concavity lower bound: ``m(s0) s/s0`` below s0, linear to M above."""
    s = np.asarray(s, float)
    m0 = float(m.m(s0))
    below = m0 * s / s0
    if m.bounded:
        above = m0 * (m.M - s) / (m.M - s0)
    else:
        above = np.full_like(s, m0)
    return np.where(s <= s0, below, above)


# ---------------------------------------------------------------------------
# regularisation


def _bisect(f, a, b):
    return optimize.bisect(f, a, b, xtol=1e-300, rtol=1e-14, maxiter=2000)


def mobility_maximum(m: Mobility):
    """Return ``(argmax, max)`` of a concave mobility."""
    if m.bounded:
        res = optimize.minimize_scalar(lambda s: -float(m.m(s)), bounds=(0.0, m.M), method="bounded",
                                       options={"xatol": 1e-12 * m.M})
        return float(res.x), float(-res.fun)
    far = float(m.m(1e12))
    return INF, (INF if far > 1e6 else far)


def regularize_mobility(m: Mobility, delta: float) -> Mobility:
    """Lipschitz approximation ``m_delta`` of a concave mobility.

    Bounded case: ``m((s2 - s1) s / M + s1) - delta`` with ``m(s1) = m(s2) = delta``;
    unbounded case: ``m(s + s_delta) - delta`` with ``m(s_delta) = delta``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    smax, mmax = mobility_maximum(m)
    if delta >= mmax:
        raise DeltaTooLarge(f"delta={delta} >= max m = {mmax}")
    f = lambda s: float(m.m(s)) - delta  # noqa: E731
    if m.bounded:
        M = m.M
        s1 = _bisect(f, 0.0, smax)
        s2 = _bisect(f, smax, M)
        a = (s2 - s1) / M

        def md(s):
            return np.asarray(m.m(a * np.clip(np.asarray(s, float), 0.0, M) + s1), float) - delta

        dmd = lambda s: a * np.asarray(m.dm(a * np.asarray(s, float) + s1), float)  # noqa: E731
        d2md = lambda s: a * a * np.asarray(m.d2m(a * np.asarray(s, float) + s1), float)  # noqa: E731
        params = {"delta": delta, "base": m.tag, **m.params, "s1": s1, "s2": s2}
    else:
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
        sd = _bisect(f, 0.0, hi)

        def md(s):
            return np.asarray(m.m(np.clip(np.asarray(s, float), 0.0, None) + sd), float) - delta

        dmd = lambda s: np.asarray(m.dm(np.asarray(s, float) + sd), float)  # noqa: E731
        d2md = lambda s: np.asarray(m.d2m(np.asarray(s, float) + sd), float)  # noqa: E731
        params = {"delta": delta, "base": m.tag, **m.params, "s_delta": sd}
    out = Mobility(md, dmd, d2md, m.M, "regularized", params)
    # the construction maps a linear mobility to itself
    if m.tag == "wasserstein" or (m.tag == "power" and m.params.get("alpha") == 1.0):
        out = replace(out, poly=Polynomial([0.0, 1.0]))
    return out


class RegularizedPressure:
    """``P_delta(s) = int_0^s m_delta G''`` by adaptive quadrature."""

    def __init__(self, spec: ProblemSpec, delta: float):
        self.mob = regularize_mobility(spec.mobility, delta)
        self.G = spec.free_energy
        self.base = spec.pressure
        self.delta = delta
        self._call = _vectorize_quad(self._scalar)

    def _scalar(self, s):
        if s <= 0.0:
            return 0.0
        return _quad(lambda r: float(self.mob.m(r) * self.G.d2G(r)), 0.0, s, self.G.breakpoints)

    def __call__(self, s):
        return self._call(s)

    def sandwich_constant(self, s) -> float:
        """Smallest ``K`` with ``-K(1+s^2) <= P_delta <= P + K(1+s)`` on samples."""
        s = np.asarray(s, float)
        pd = np.asarray(self(s), float)
        p = np.asarray(self.base(s), float)
        k1 = np.max(-pd / (1 + s**2))
        k2 = np.max((pd - p) / (1 + s))
        return float(max(0.0, k1, k2))


def regularize_pressure(spec: ProblemSpec, delta: float) -> RegularizedPressure:
    return RegularizedPressure(spec, delta)


# ---------------------------------------------------------------------------
# named examples


def cahn_hilliard(theta: float = 1.0, kind: str = "double_well"):
    """Mobility ``s(1-s)`` with a double-well or logarithmic free energy."""
    energy = double_well(theta) if kind == "double_well" else logarithmic(theta)
    return quadratic(1.0), energy


def thin_film(alpha: float, beta: float = 1.0, kappa: float = 0.0):
    return power(alpha), thin_film_energy(alpha, beta, kappa)
