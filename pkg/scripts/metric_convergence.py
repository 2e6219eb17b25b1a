"""Dynamic distance between two Gaussian bumps (m(s) = s) against the quantile formula,
as the path resolution K and the grid are refined."""

import argparse

import numpy as np

from jkoflow import physics as ph
from jkoflow.grid import Density, Grid
from jkoflow.metric import cumulative, distance_dynamic


def quantile_w2(g, a, b, samples=400_000):
    t = (np.arange(samples) + 0.5) / samples
    Fa, Fb = cumulative(a, g.h), cumulative(b, g.h)
    qa = np.interp(t, Fa / Fa[-1], g.faces)
    qb = np.interp(t, Fb / Fb[-1], g.faces)
    return float(np.sqrt(np.mean((qa - qb) ** 2)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sep", type=float, default=0.25)
    ap.add_argument("--width", type=float, default=0.06)
    args = ap.parse_args()
    spec = ph.ProblemSpec(ph.wasserstein(), ph.zero_energy(), 1.0)
    print(f"{'n':>5} {'K':>4} {'W_dyn':>10} {'W_ref':>10} {'rel':>9}")
    for n in (32, 64, 128):
        g = Grid(n)
        x = g.cell_centers
        a = np.exp(-0.5 * ((x - 0.5 + args.sep / 2) / args.width) ** 2)
        b = np.exp(-0.5 * ((x - 0.5 - args.sep / 2) / args.width) ** 2)
        a, b = a / g.integrate(a), b / g.integrate(b)
        ref = quantile_w2(g, a, b)
        for K in (4, 8, 16, 32):
            w = distance_dynamic(Density(a, g), Density(b, g), K, spec).value
            print(f"{n:5d} {K:4d} {w:10.6f} {ref:10.6f} {abs(w - ref) / ref:9.2e}")


if __name__ == "__main__":
    main()
