"""Acceptance suite: ten criteria at their stated tolerances.

Each ``test_criterion_NN_*`` records a one-line detail; the verdict lines are
printed in the terminal summary (see ``conftest.py``) and also to stdout.
"""

import time
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import trapezoid

from jkoflow import diagnostics as dg
from jkoflow import physics as ph
from jkoflow.config import load
from jkoflow.errors import PositivityLoss
from jkoflow.flows import direct_pde_solve
from jkoflow.functionals import TestPotential
from jkoflow.grid import Density, Grid
from jkoflow.jko import JkoConfig, MetricBackend, run
from jkoflow.metric import cumulative, distance_dynamic, distance_oracle_small

ROOT = Path(__file__).resolve().parents[1]


def _verdict(record_property, n, text):
    record_property("detail", text)
    print(f"criterion {n}: {text}")


def _ch_spec(mass):
    return ph.ProblemSpec(*ph.cahn_hilliard(1.0), mass)


def _ch_initial(n):
    cfg = load(ROOT / "configs" / "cahn_hilliard.yaml")
    return cfg.with_overrides(n_cells=n).initial_density()


@pytest.fixture(scope="module")
def ch_run():
    u0 = _ch_initial(128)
    t0 = time.perf_counter()
    traj = run(u0, JkoConfig(1e-3, 0.5, MetricBackend("dynamic", 8)), _ch_spec(u0.mass))
    return traj, time.perf_counter() - t0


def test_criterion_01_structure(ch_run, record_property):
    traj, secs = ch_run
    box, mass, decay = dg.check_structure(traj)
    V = traj.values()
    assert V.min() >= 0.0 and V.max() <= 1.0
    assert box.context["violations"] == 0
    assert mass.lhs <= 1e-12 * traj.spec.mass
    assert decay.context["total_increase"] == 0.0
    assert secs <= 120.0
    st = Counter(r.status for r in traj.records[1:])
    _verdict(record_property, 1, f"box violations 0, mass err {mass.lhs:.1e}, energy increase 0, "
                                 f"{secs:.1f}s, steps {dict(st)}")


def test_criterion_02_energy_estimate(ch_run, record_property):
    traj, _ = ch_run
    rep = dg.check_energy_estimate(traj)
    E0 = traj.energies[0]
    assert rep.lhs <= E0 + 1e-8 * (1 + abs(E0))
    _verdict(record_property, 2, f"max prefix lhs {rep.lhs:.6f} <= E0 {E0:.6f}")


def test_criterion_03_entropy_budget(ch_run, record_property):
    traj, _ = ch_run
    summary, steps = dg.check_entropy_dissipation(traj)
    assert summary.passed and all(s.passed for s in steps)
    u0 = traj.iterates[0]
    fine = run(u0, JkoConfig(5e-4, 0.5, MetricBackend("dynamic", 8)), traj.spec)
    rep = dg.check_h2_budget(traj, fine, factor=2.0)
    assert rep.passed
    _verdict(record_property, 3, f"per-step ok (C={summary.context['C']:.3g}), budget ratio "
                                 f"{rep.context['ratio']:.4f}")


def _quantile_w2(g, a, b):
    t = np.linspace(0, 1, 400001)[1:-1]
    Fa, Fb = cumulative(a, g.h), cumulative(b, g.h)
    qa = np.interp(t, Fa / Fa[-1], g.faces)
    qb = np.interp(t, Fb / Fb[-1], g.faces)
    return float(np.sqrt(trapezoid((qa - qb) ** 2, t)))


def _tiny_instances(count=50, seed=2024):
    rng = np.random.default_rng(seed)
    mobs = [ph.quadratic(1.0), ph.wasserstein(), ph.power(0.75)]
    for i in range(count):
        n, K = 3 + i % 3, 1 + (i // 3) % 4
        g = Grid(n)
        a = rng.uniform(0.1, 0.9, n)
        b = rng.uniform(0.1, 0.9, n)
        b *= a.sum() / b.sum()
        if b.max() > 0.95:
            b *= 0.9 / b.max()
            a *= b.sum() / a.sum()
        spec = ph.ProblemSpec(mobs[i % 3], ph.zero_energy(), g.integrate(a))
        yield Density(a, g), Density(b, g), spec, K


def test_criterion_04_metric(record_property):
    t0 = time.perf_counter()
    g = Grid(64)
    x = g.cell_centers
    bump = lambda c: np.exp(-0.5 * ((x - c) / 0.06) ** 2)  # noqa: E731
    a, b = bump(0.375), bump(0.625)
    a, b = a / g.integrate(a), b / g.integrate(b)
    spec = ph.ProblemSpec(ph.wasserstein(), ph.zero_energy(), 1.0)
    w = distance_dynamic(Density(a, g), Density(b, g), 32, spec).value
    ref = _quantile_w2(g, a, b)
    rel = abs(w - ref) / ref
    assert rel <= 0.01
    worst = 0.0
    certified = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for u0, u1, sp, K in _tiny_instances():
            o = distance_oracle_small(u0, u1, sp, K=K)
            d = distance_dynamic(u0, u1, K, sp).value
            worst = max(worst, abs(o.value - d))
            certified += bool(o.certified)
    secs = time.perf_counter() - t0
    assert worst <= 1e-6
    assert secs <= 300.0
    _verdict(record_property, 4, f"bumps W={w:.6f} vs quantile {ref:.6f} (rel {rel:.1e}); oracle worst "
                                 f"diff {worst:.1e} on 50 instances ({certified} KKT-certified), {secs:.0f}s")


def test_criterion_05_oracle_equivalence(record_property):
    g = Grid(128)
    x = g.cell_centers
    u0 = Density(0.5 + 0.2 * np.cos(np.pi * x) + 0.1 * np.cos(2 * np.pi * x), g)
    spec = _ch_spec(u0.mass)
    tau, T = 1e-5, 0.01
    direct = direct_pde_solve(u0, spec, tau, T)
    jko = run(u0, JkoConfig(tau, T, MetricBackend("frozen", 1)), spec)
    gap = float(np.abs(direct.iterates[-1].values - jko.iterates[-1].values).max())
    assert gap <= 5e-3
    # m = 1, G = 0: exact Neumann cosine series of u_t = -u_xxxx
    amps = {1: 0.2, 2: 0.1}
    v0 = Density(0.5 + sum(c * np.cos(k * np.pi * x) for k, c in amps.items()), g)
    lin = ph.ProblemSpec(ph.constant(1.0), ph.zero_energy(), v0.mass)
    num = direct_pde_solve(v0, lin, tau, T).iterates[-1].values
    exact = 0.5 + sum(c * np.exp(-((k * np.pi) ** 4) * T) * np.cos(k * np.pi * x) for k, c in amps.items())
    err = float(np.abs(num - exact).max())
    assert err <= 1e-3
    _verdict(record_property, 5, f"JKO(frozen) vs direct L_inf {gap:.1e}; linear mode vs exact {err:.1e}")


def test_criterion_06_inequality_suite(ch_run, record_property):
    traj, _ = ch_run
    lv = [dg.check_lions_villani(u) for u in traj.iterates]
    lb = [dg.check_laplace_bounds(u) for u in traj.iterates]
    fi = [dg.check_flow_interchange(traj.iterates[n - 1], traj.iterates[n], traj.tau, traj.spec)
          for n in range(1, len(traj.iterates))]
    assert all(r.passed for r in lv) and all(r.passed for r in lb)
    hard = sum(r.status == "fail" for r in fi)
    inconclusive = sum(r.status == "inconclusive" for r in fi)
    assert hard == 0
    assert inconclusive <= 0.02 * len(fi)
    _verdict(record_property, 6, f"lions_villani {len(lv)}/{len(lv)}, laplace {len(lb)}/{len(lb)}, "
                                 f"flow interchange {len(fi) - inconclusive} pass / {inconclusive} inconclusive")


def test_criterion_07_weak_residual(record_property):
    res = []
    for tau, n in ((2e-3, 32), (1e-3, 64), (5e-4, 128)):
        g = Grid(n)
        x = g.cell_centers
        u0 = Density(0.5 + 0.3 * np.cos(np.pi * x) + 0.1 * np.cos(2 * np.pi * x), g)
        spec = _ch_spec(u0.mass)
        traj = run(u0, JkoConfig(tau, 0.5, MetricBackend("dynamic", 8)), spec)
        rep = dg.check_weak_residual(traj, dg.smooth_bump(0.1, 0.4), TestPotential.cosine(g, (0.0, 1.0)))
        res.append(rep.context["residual"])
    ratios = [res[0] / res[1], res[1] / res[2]]
    assert min(ratios) >= 1.5
    _verdict(record_property, 7, "residuals " + ", ".join(f"{r:.2e}" for r in res)
             + " (ratios " + ", ".join(f"{q:.2f}" for q in ratios) + ")")


def test_criterion_08_delta_route(record_property):
    g = Grid(64)
    x = g.cell_centers
    u0 = Density(0.3 + 0.25 * np.cos(np.pi * x), g)
    base = ph.ProblemSpec(*ph.thin_film(0.75, 1.0, 0.0), u0.mass)
    finals = []
    for delta in (1e-2, 1e-3, 1e-4):
        traj = run(u0, JkoConfig(1e-3, 0.05, MetricBackend("dynamic", 8), delta=delta), base)
        for rep in dg.check_structure(traj) + [dg.check_energy_estimate(traj)]:
            assert rep.passed, (delta, rep.as_dict())
        finals.append(traj.iterates[-1].values)
    d = [float(np.sqrt(g.h * np.sum((p - q) ** 2))) for p, q in zip(finals, finals[1:])]
    assert d[1] < d[0]
    _verdict(record_property, 8, f"L2 differences {d[0]:.2e} -> {d[1]:.2e}; structure passes for all delta")


def test_criterion_09_holder(ch_run, record_property):
    traj, _ = ch_run
    rng = np.random.default_rng(0)
    pairs = [tuple(rng.uniform(0.0, 0.5, 2)) for _ in range(20)]
    reps = dg.check_holder(traj, pairs, K=8)
    assert all(r.lhs <= r.rhs + 1e-6 for r in reps)
    worst = min(r.slack for r in reps)
    _verdict(record_property, 9, f"20/20 pairs, smallest slack {worst:.3e}")


def test_criterion_10_positivity_contrast(record_property):
    cfg = load(ROOT / "configs" / "thin_film_contrast.yaml")
    u0 = cfg.initial_density()
    spec = cfg.problem(u0)
    with pytest.raises(PositivityLoss) as info:
        direct_pde_solve(u0, spec, float(cfg.compare["tau_pde"]), cfg.T_final)
    traj = run(u0, cfg.jko_config(), spec)
    box = dg.check_structure(traj)[0]
    assert box.context["violations"] == 0
    _verdict(record_property, 10, f"direct solver PositivityLoss at t={info.value.time:.1e}; "
                                  f"JKO {traj.n_steps} steps, 0 box violations")
