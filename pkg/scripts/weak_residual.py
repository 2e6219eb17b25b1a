"""Weak-form residual under simultaneous (tau, h) halving."""

import numpy as np

from jkoflow import diagnostics as dg
from jkoflow import physics as ph
from jkoflow.functionals import TestPotential
from jkoflow.grid import Density, Grid
from jkoflow.jko import JkoConfig, MetricBackend, run


def main():
    prev = None
    for tau, n in ((2e-3, 32), (1e-3, 64), (5e-4, 128)):
        g = Grid(n)
        x = g.cell_centers
        u0 = Density(0.5 + 0.3 * np.cos(np.pi * x) + 0.1 * np.cos(2 * np.pi * x), g)
        spec = ph.ProblemSpec(*ph.cahn_hilliard(1.0), u0.mass)
        traj = run(u0, JkoConfig(tau, 0.5, MetricBackend("dynamic", 8)), spec)
        r = dg.check_weak_residual(traj, dg.smooth_bump(0.1, 0.4), TestPotential.cosine(g, (0.0, 1.0))).context["residual"]
        ratio = f"{prev / r:.2f}" if prev else "-"
        print(f"tau={tau:.0e} n={n:4d} residual={r:.3e} ratio={ratio}")
        prev = r


if __name__ == "__main__":
    main()
