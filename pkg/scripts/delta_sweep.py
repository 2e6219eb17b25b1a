"""Regularization route for m = s^alpha: final states for decreasing delta."""

import argparse

import numpy as np

from jkoflow import diagnostics as dg
from jkoflow import physics as ph
from jkoflow.grid import Density, Grid
from jkoflow.jko import JkoConfig, MetricBackend, run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, default=0.75)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--T", type=float, default=0.05)
    ap.add_argument("--deltas", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    args = ap.parse_args()
    g = Grid(args.n)
    x = g.cell_centers
    u0 = Density(0.3 + 0.25 * np.cos(np.pi * x), g)
    spec = ph.ProblemSpec(*ph.thin_film(args.alpha, 1.0, 0.0), u0.mass)
    prev = None
    for delta in args.deltas:
        traj = run(u0, JkoConfig(1e-3, args.T, MetricBackend("dynamic", 8), delta=delta), spec)
        ok = all(r.passed for r in dg.check_structure(traj))
        u = traj.iterates[-1].values
        d = float(np.sqrt(g.h * np.sum((u - prev) ** 2))) if prev is not None else float("nan")
        print(f"delta={delta:.0e}  structure={'ok' if ok else 'FAIL'}  L2 to previous delta={d:.3e}")
        prev = u


if __name__ == "__main__":
    main()
