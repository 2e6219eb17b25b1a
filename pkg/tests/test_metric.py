import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.stats import wasserstein_distance

from jkoflow import physics as ph
from jkoflow.errors import InfeasibleConstraint, MassMismatch
from jkoflow.grid import Density, Grid
from jkoflow.metric import (
    cumulative,
    distance_dynamic,
    distance_frozen,
    distance_oracle_small,
    frozen_weight,
)

MOBS = [ph.quadratic(1.0), ph.wasserstein(), ph.power(0.75)]


def _pair(rng, n, mass_frac=None):
    a = rng.uniform(0.1, 0.9, n)
    b = rng.uniform(0.1, 0.9, n)
    b *= a.sum() / b.sum()
    if b.max() >= 0.95:
        b *= 0.9 / b.max()
        a *= b.sum() / a.sum()
    return a, b


def _spec(mob, u, g):
    return ph.ProblemSpec(mob, ph.zero_energy(), g.integrate(u), g.length)


def _bumps(n, w=0.08, centers=(0.375, 0.625)):
    g = Grid(n)
    x = g.cell_centers
    bump = lambda c: np.exp(-0.5 * ((x - c) / w) ** 2)  # noqa: E731
    a, b = bump(centers[0]), bump(centers[1])
    return g, a / g.integrate(a), b / g.integrate(b)


def quantile_w2(g, a, b):
    """1D quadratic Wasserstein distance from the quantile functions of the cell histograms."""
    # mass uniformly spread on each cell: invert the piecewise-linear CDFs
    t = np.linspace(0, 1, 200001)[1:-1]
    Fa, Fb = cumulative(a, g.h), cumulative(b, g.h)
    qa = np.interp(t, Fa / Fa[-1], g.faces)
    qb = np.interp(t, Fb / Fb[-1], g.faces)
    return np.sqrt(trapezoid((qa - qb) ** 2, t))


def test_identity_pair():
    g = Grid(8)
    u = Density(0.3 + 0.1 * np.cos(np.pi * g.cell_centers), g)
    res = distance_dynamic(u, u, 4, _spec(ph.quadratic(1.0), u.values, g))
    assert res.value == 0.0
    assert np.all(res.path.momentum == 0.0)


def test_quantile_oracle_matches_scipy():
    g, a, b = _bumps(64)
    # scipy's W1 between the same cell measures is an independent sanity check of the CDF handling
    x = g.cell_centers
    assert wasserstein_distance(x, x, a, b) == pytest.approx(0.25, abs=2e-3)
    assert quantile_w2(g, a, b) == pytest.approx(0.25, abs=1e-5)


def test_wasserstein_reduction_coarse():
    g, a, b = _bumps(32)
    spec = ph.ProblemSpec(ph.wasserstein(), ph.zero_energy(), 1.0)
    ref = quantile_w2(g, a, b)
    res = distance_dynamic(Density(a, g), Density(b, g), 8, spec)
    assert abs(res.value - ref) / ref < 0.02
    assert not res.info.degraded


def test_path_invariants():
    rng = np.random.default_rng(1)
    g = Grid(10)
    a, b = _pair(rng, 10)
    spec = _spec(ph.quadratic(1.0), a, g)
    res = distance_dynamic(Density(a, g), Density(b, g), 6, spec)
    p = res.path
    assert p.rho.shape == (7, 10) and p.momentum.shape == (6, 11)
    assert np.allclose(p.rho[0], a) and np.allclose(p.rho[-1], b, atol=1e-12)
    assert p.continuity_residual(g) < 1e-9
    assert np.all(p.momentum[:, [0, -1]] == 0.0)
    assert np.allclose(g.h * p.rho.sum(axis=1), g.integrate(a), rtol=1e-12)
    assert p.rho.min() >= 0 and p.rho.max() <= 1.0
    assert res.value == pytest.approx(np.sqrt(p.action), rel=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from(range(3)))
def test_symmetry(seed, k):
    rng = np.random.default_rng(seed)
    g = Grid(8)
    a, b = _pair(rng, 8)
    spec = _spec(MOBS[k], a, g)
    w1 = distance_dynamic(Density(a, g), Density(b, g), 4, spec).value
    w2 = distance_dynamic(Density(b, g), Density(a, g), 4, spec).value
    assert abs(w1 - w2) <= 1e-6 * (1 + w1)


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from(range(3)))
def test_triangle_inequality(seed, k):
    rng = np.random.default_rng(seed)
    g = Grid(8)
    a, b = _pair(rng, 8)
    c = rng.uniform(0.1, 0.9, 8)
    c *= a.sum() / c.sum()
    if c.max() >= 1:
        return
    spec = _spec(MOBS[k], a, g)
    d = lambda x, y: distance_dynamic(Density(x, g), Density(y, g), 4, spec).value  # noqa: E731
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-6


def test_refinement_in_K_contracts():
    # differences between successive K halve geometrically (second order in 1/K)
    rng = np.random.default_rng(7)
    for k in range(6):
        g = Grid(9)
        a, b = _pair(rng, 9)
        spec = _spec(MOBS[k % 3], a, g)
        v = [distance_dynamic(Density(a, g), Density(b, g), K, spec).value for K in (1, 2, 4, 8, 16)]
        d = np.abs(np.diff(v))
        assert np.all(d[1:] <= 0.5 * d[:-1] + 1e-9)


def test_wasserstein_bumps_decrease_in_K():
    g, a, b = _bumps(32)
    spec = ph.ProblemSpec(ph.wasserstein(), ph.zero_energy(), 1.0)
    v = [distance_dynamic(Density(a, g), Density(b, g), K, spec).value for K in (1, 2, 4, 8)]
    assert np.all(np.diff(v) <= 1e-8)


def test_regularised_mobility_gives_larger_distance():
    rng = np.random.default_rng(2)
    g = Grid(8)
    for _ in range(4):
        a, b = _pair(rng, 8)
        spec = _spec(ph.quadratic(1.0), a, g)
        w = distance_dynamic(Density(a, g), Density(b, g), 4, spec).value
        wd = distance_dynamic(Density(a, g), Density(b, g), 4, spec.regularized(0.01)).value
        assert w <= wd + 1e-8


def test_errors():
    g = Grid(5)
    spec = ph.ProblemSpec(ph.quadratic(1.0), ph.zero_energy(), 0.5)
    a = Density(np.full(5, 0.5), g)
    with pytest.raises(MassMismatch):
        distance_dynamic(a, Density(np.full(5, 0.6), g), 2, spec)
    with pytest.raises(InfeasibleConstraint):
        distance_dynamic(a, Density([1.5, 0.25, 0.25, 0.25, 0.25], g), 2, spec)


# -- frozen backend ------------------------------------------------------------


def test_frozen_identity_and_symmetry():
    rng = np.random.default_rng(4)
    g = Grid(12)
    a, b = _pair(rng, 12)
    spec = _spec(ph.quadratic(1.0), a, g)
    ua, ub = Density(a, g), Density(b, g)
    assert distance_frozen(ua, ua, ua, spec) == 0.0
    assert distance_frozen(ua, ua, ub, spec) == pytest.approx(distance_frozen(ua, ub, ua, spec), rel=1e-12)


def test_frozen_constant_weight_dense_oracle():
    rng = np.random.default_rng(8)
    g = Grid(10)
    a, b = _pair(rng, 10)
    spec = ph.ProblemSpec(ph.constant(1.0), ph.zero_energy(), g.integrate(a))
    v = a - b
    L = -g.lap_matrix()
    ref = np.sqrt(g.h * v @ np.linalg.pinv(L) @ v)
    assert distance_frozen(Density(a, g), Density(a, g), Density(b, g), spec) == pytest.approx(ref, rel=1e-10)


def test_frozen_matches_dynamic_for_close_pairs():
    g = Grid(16)
    x = g.cell_centers
    a = 0.5 + 0.2 * np.cos(np.pi * x)
    b = a + 1e-3 * np.cos(2 * np.pi * x)
    spec = _spec(ph.quadratic(1.0), a, g)
    wd = distance_dynamic(Density(a, g), Density(b, g), 8, spec).value
    wf = distance_frozen(Density(a, g), Density(a, g), Density(b, g), spec)
    assert abs(wd - wf) / wf < 0.01


def test_frozen_weight_floor():
    g = Grid(6)
    u = Density([0.0, 0.0, 0.0, 1.0, 1.0, 1.0], g)
    w, n = frozen_weight(u, ph.quadratic(1.0), 0.5)
    assert n == 4
    assert np.all(w >= 1e-12 * 0.25)


# -- small-instance oracle ---------------------------------------------------------


def test_oracle_agrees_on_tiny_instances():
    rng = np.random.default_rng(12)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in range(6):
            n, K = 3 + i % 3, 1 + i % 4
            g = Grid(n)
            a, b = _pair(rng, n)
            spec = _spec(MOBS[i % 3], a, g)
            r = distance_oracle_small(Density(a, g), Density(b, g), spec, K=K, n_random=3)
            d = distance_dynamic(Density(a, g), Density(b, g), K, spec).value
            assert abs(r.value - d) <= 1e-6
            assert r.kkt_residual < 1e-8


def test_oracle_identity():
    g = Grid(3)
    a = np.array([0.2, 0.5, 0.3])
    spec = _spec(ph.quadratic(1.0), a, g)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = distance_oracle_small(Density(a, g), Density(a, g), spec, K=2, n_random=2)
    assert r.value == pytest.approx(0.0, abs=1e-8)
