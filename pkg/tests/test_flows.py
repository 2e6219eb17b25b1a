import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jkoflow import physics as ph
from jkoflow.errors import CflViolation, DegenerateState, PositivityLoss
from jkoflow.flows import (
    cfl_limit,
    direct_pde_solve,
    heat_dissipation_rate,
    heat_step,
    stationary_profile,
    viscous_claw_step,
)
from jkoflow.functionals import TestPotential, energy, entropy_functional, regularized_potential
from jkoflow.grid import Density, Grid


def _eig(g, k):
    return 4.0 / g.h**2 * np.sin(k * np.pi * g.h / (2 * g.length)) ** 2


def _ch(mass, theta=1.0):
    return ph.ProblemSpec(*ph.cahn_hilliard(theta), mass)


# -- heat flow -----------------------------------------------------------------


def test_heat_constant_is_fixed():
    g = Grid(10)
    v = Density(np.full(10, 0.3), g)
    assert np.allclose(heat_step(v, 0.1).values, 0.3, atol=1e-15)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_heat_eigenmode_decay(k):
    g = Grid(24)
    mode = np.cos(k * np.pi * g.cell_centers)
    out = heat_step(Density(0.5 + 0.1 * mode, g), 1e-3).values
    factor = 1.0 / (1.0 + 1e-3 * _eig(g, k))
    assert np.allclose(out, 0.5 + 0.1 * factor * mode, atol=1e-13)


def test_heat_hand_example():
    # n = 3, h = 1: (I - ds L) w = v with L = [[-1,1,0],[1,-2,1],[0,1,-1]], ds = 1
    g = Grid(3, 3.0)
    A = np.array([[2.0, -1, 0], [-1, 3, -1], [0, -1, 2]])
    v = np.array([1.0, 0.0, 0.0])
    assert np.allclose(heat_step(Density(v, g), 1.0).values, np.linalg.solve(A, v), atol=1e-14)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(1e-5, 1.0))
def test_heat_mass_max_principle_entropy(seed, ds):
    rng = np.random.default_rng(seed)
    g = Grid(16)
    v = Density(rng.uniform(0.05, 0.95, 16), g)
    w = heat_step(v, ds)
    spec = _ch(v.mass)
    assert w.mass == pytest.approx(v.mass, rel=1e-12)
    assert v.values.min() - 1e-14 <= w.values.min() and w.values.max() <= v.values.max() + 1e-14
    assert entropy_functional(w, spec) <= entropy_functional(v, spec) + 1e-12


def test_heat_step_rejects_nonpositive_ds():
    g = Grid(4)
    with pytest.raises(ValueError):
        heat_step(Density(np.ones(4), g), 0.0)


def test_dissipation_rate_pure_dirichlet():
    g = Grid(32)
    v = Density(0.5 + 0.2 * np.cos(np.pi * g.cell_centers), g)
    spec = ph.ProblemSpec(ph.quadratic(1.0), ph.zero_energy(), v.mass)
    r = heat_dissipation_rate(v, spec)
    lap = g.lap(v.values)
    assert r.g_term == 0.0
    assert r.rate == pytest.approx(-g.h * lap @ lap, rel=1e-14)


def test_dissipation_rate_constant_and_degenerate():
    g = Grid(8)
    spec = _ch(0.4)
    assert heat_dissipation_rate(Density(np.full(8, 0.4), g), spec).rate == 0.0
    with pytest.raises(DegenerateState):
        heat_dissipation_rate(Density(np.r_[0.0, np.full(7, 0.5)], g), spec)


def test_dissipation_rate_matches_quotient():
    g = Grid(32)
    v = Density(0.5 + 0.2 * np.cos(np.pi * g.cell_centers) + 0.05 * np.cos(3 * np.pi * g.cell_centers), g)
    spec = _ch(v.mass)
    rate = heat_dissipation_rate(v, spec).rate
    e0 = energy(v, spec).total
    errs = []
    for s in (1e-5, 5e-6, 2.5e-6):
        q = (energy(heat_step(v, s), spec).total - e0) / s
        errs.append(abs(q - rate))
    # first order in s
    assert 1.7 < errs[0] / errs[1] < 2.3 and 1.7 < errs[1] / errs[2] < 2.3


# -- viscous conservation law ---------------------------------------------------


def test_claw_constant_potential_is_heat():
    g = Grid(16)
    v = Density(0.5 + 0.2 * np.cos(np.pi * g.cell_centers), g)
    spec = _ch(v.mass)
    V = TestPotential.constant(g, 2.0)
    eps, ds = 0.5, 0.5 * cfl_limit(g, 0.5)
    assert np.allclose(viscous_claw_step(v, V, eps, ds, spec).values, heat_step(v, ds, eps).values, atol=1e-15)


@pytest.mark.parametrize("eps", [0.05, 0.5])
def test_claw_stationary_profile(eps):
    g = Grid(24)
    spec = _ch(0.4)
    V = TestPotential.cosine(g, (0.0, 0.3, -0.1))
    stat = stationary_profile(g, V, eps, spec, 0.4)
    assert stat.mass == pytest.approx(0.4, rel=1e-12)
    ds = cfl_limit(g, eps)
    out = viscous_claw_step(stat, V, eps, ds, spec)
    assert np.abs(out.values - stat.values).max() <= 1e-6 * ds


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_claw_l1_contraction_and_decay(seed):
    rng = np.random.default_rng(seed)
    g = Grid(16)
    spec = _ch(0.5)
    a = Density(rng.uniform(0.2, 0.8, 16), g)
    b = Density(rng.uniform(0.2, 0.8, 16), g)
    V = TestPotential.cosine(g, (0.0, 0.5))
    eps = 0.1
    ds = cfl_limit(g, eps)
    a1, b1 = viscous_claw_step(a, V, eps, ds, spec), viscous_claw_step(b, V, eps, ds, spec)
    assert np.abs(a1.values - b1.values).sum() <= np.abs(a.values - b.values).sum() + 1e-12
    assert regularized_potential(a1, V, eps, spec) <= regularized_potential(a, V, eps, spec) + 1e-12
    assert a1.mass == pytest.approx(a.mass, rel=1e-12)


def test_claw_cfl():
    g = Grid(8)
    spec = _ch(0.5)
    V = TestPotential.cosine(g)
    v = Density(np.full(8, 0.5), g)
    with pytest.raises(CflViolation):
        viscous_claw_step(v, V, 0.1, 2 * cfl_limit(g, 0.1), spec)
    with pytest.raises(ValueError):
        viscous_claw_step(v, V, 0.0, 1e-6, spec)


# -- direct solver ------------------------------------------------------------------


def test_direct_solver_cosine_mode():
    g = Grid(32)
    mode = np.cos(2 * np.pi * g.cell_centers)
    u0 = Density(0.5 + 0.1 * mode, g)
    spec = ph.ProblemSpec(ph.constant(1.0), ph.zero_energy(), u0.mass)
    tau, T = 1e-5, 1e-3
    traj = direct_pde_solve(u0, spec, tau, T)
    lam = _eig(g, 2)
    disc = (1.0 / (1.0 + tau * lam**2)) ** traj.n_steps
    assert np.allclose(traj.iterates[-1].values, 0.5 + 0.1 * disc * mode, atol=1e-12)
    # and close to the continuum decay exp(-(2 pi)^4 T)
    assert disc == pytest.approx(np.exp(-((2 * np.pi) ** 4) * T), rel=0.05)


def test_direct_solver_constant_and_mass():
    g = Grid(16)
    spec = _ch(0.3)
    const = direct_pde_solve(Density(np.full(16, 0.3), g), spec, 1e-4, 1e-3)
    assert np.allclose(const.iterates[-1].values, 0.3, atol=1e-14)
    u0 = Density(0.5 + 0.2 * np.cos(np.pi * g.cell_centers), g)
    traj = direct_pde_solve(u0, _ch(u0.mass), 1e-4, 1e-2)
    assert traj.iterates[-1].mass == pytest.approx(u0.mass, rel=1e-10)


def test_direct_solver_positivity_loss():
    g = Grid(64)
    x = g.cell_centers
    u0 = Density(1e-6 + np.maximum(1 - ((x - 0.5) / 0.2) ** 2, 0.0), g)
    spec = ph.ProblemSpec(*ph.thin_film(1.0), u0.mass)
    with pytest.raises(PositivityLoss) as info:
        direct_pde_solve(u0, spec, 1e-4, 1e-2)
    assert info.value.time > 0
    assert info.value.trajectory.n_steps >= 0
