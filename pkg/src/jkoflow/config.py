"""Declarative run configuration (YAML) and its resolution into solver objects.

Schema (all sections optional except ``problem`` and ``scheme``)::

    domain:   {L: 1.0}
    grid:     {n_cells: 128}
    problem:
      mobility: {tag: quadratic, M: 1.0}          # or power {alpha}, power_product {alpha0, alpha1, M}, ...
      energy:   {tag: double_well, theta: 1.0}   # or zero, quadratic {c}, logarithmic {theta}, thin_film {alpha, beta, kappa}
      mass: null                                 # null: taken from the initial condition
    scheme:   {tau: 1.0e-3, T_final: 0.5, backend: dynamic, K: 8, solver: joint, eps_V: 0.0, delta: 0.0}
    initial:  {tag: tanh-interface, center: 0.5, width: 0.05, low: 0.05, high: 0.95}
    checks:   [structure, energy_estimate]
    outputs:  {directory: out, snapshot_every: 1, formats: [csv, json, dat]}
    compare:  {tau_pde: 1.0e-5}
    sweep:    {tau: [...], n_cells: [...], K: [...], delta: [...]}
    seed: 0
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import physics as ph
from .errors import ConfigError, InfeasibleConstraint
from .grid import Density, Grid
from .jko import JkoConfig
from .metric import MetricBackend

SCHEMA_VERSION = "1"

KNOWN_CHECKS = (
    "structure", "energy_estimate", "entropy_dissipation", "lions_villani",
    "laplace_bounds", "flow_interchange", "energy_lower_bound",
)

_MOBILITY_PARAMS = {
    "wasserstein": (),
    "quadratic": ("M",),
    "power": ("alpha",),
    "power_product": ("alpha0", "alpha1", "M"),
    "constant": ("value",),
}
_ENERGY_PARAMS = {
    "zero": (),
    "quadratic": ("c",),
    "double_well": ("theta",),
    "logarithmic": ("theta",),
    "thin_film": ("alpha", "beta", "kappa"),
}


@dataclass
class RunConfig:
    length: float
    n_cells: int
    mobility: dict
    energy: dict
    mass: Optional[float]
    tau: float
    T_final: float
    backend: str = "dynamic"
    K: int = 8
    solver: str = "joint"
    eps_V: float = 0.0
    delta: float = 0.0
    initial: dict = field(default_factory=lambda: {"tag": "constant"})
    checks: list = field(default_factory=lambda: ["structure", "energy_estimate"])
    out_dir: str = "out"
    snapshot_every: int = 1
    formats: list = field(default_factory=lambda: ["csv", "json", "dat"])
    compare: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    seed: int = 0
    source: Optional[str] = None

    # -- resolution ---------------------------------------------------------

    def grid(self) -> Grid:
        return Grid(self.n_cells, self.length)

    def mobility_obj(self) -> ph.Mobility:
        return _build(ph.MOBILITY_CATALOG, _MOBILITY_PARAMS, self.mobility, "mobility")

    def energy_obj(self) -> ph.FreeEnergy:
        return _build(ph.ENERGY_CATALOG, _ENERGY_PARAMS, self.energy, "energy")

    def initial_density(self) -> Density:
        g = self.grid()
        u = initial_values(self.initial, g, self.source)
        mob = self.mobility_obj()
        if self.mass is not None:
            if self.mass > mob.M * self.length:
                raise InfeasibleConstraint(f"mass {self.mass} exceeds M * L = {mob.M * self.length}")
            cur = g.integrate(u)
            if cur <= 0:
                raise ConfigError("initial condition has zero mass")
            u = u * (self.mass / cur)
        if np.any(u < 0) or np.any(u > mob.M):
            raise InfeasibleConstraint("initial condition outside [0, M]")
        return Density(u, g)

    def problem(self, u0: Optional[Density] = None) -> ph.ProblemSpec:
        u0 = u0 if u0 is not None else self.initial_density()
        mob = self.mobility_obj()
        mass = u0.mass
        if not mass < mob.M * self.length:
            raise InfeasibleConstraint(f"mass {mass} must be below M * L = {mob.M * self.length}")
        try:
            return ph.ProblemSpec(mob, self.energy_obj(), mass, self.length)
        except ValueError as exc:
            raise InfeasibleConstraint(str(exc)) from exc

    def jko_config(self) -> JkoConfig:
        try:
            return JkoConfig(self.tau, self.T_final, MetricBackend(self.backend, self.K), self.solver,
                             eps_V=self.eps_V, delta=self.delta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def with_overrides(self, **kw) -> "RunConfig":
        new = copy.deepcopy(self)
        for k, v in kw.items():
            if not hasattr(new, k):
                raise ConfigError(f"unknown override {k!r}")
            setattr(new, k, v)
        return new

    def echo(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "domain": {"L": self.length},
            "grid": {"n_cells": self.n_cells},
            "problem": {"mobility": self.mobility, "energy": self.energy, "mass": self.mass},
            "scheme": {"tau": self.tau, "T_final": self.T_final, "backend": self.backend, "K": self.K,
                       "solver": self.solver, "eps_V": self.eps_V, "delta": self.delta},
            "initial": self.initial,
            "checks": list(self.checks),
            "outputs": {"snapshot_every": self.snapshot_every, "formats": list(self.formats)},
            "compare": self.compare,
            "sweep": self.sweep,
            "seed": self.seed,
        }


def _build(catalog, params, entry: dict, what: str):
    if not isinstance(entry, dict) or "tag" not in entry:
        raise ConfigError(f"{what} needs a 'tag'")
    tag = entry["tag"]
    if tag not in catalog:
        raise ConfigError(f"unknown {what} tag {tag!r}; known: {sorted(catalog)}")
    kw = {k: v for k, v in entry.items() if k != "tag"}
    extra = set(kw) - set(params[tag])
    if extra:
        raise ConfigError(f"{what} {tag!r} does not take {sorted(extra)}")
    try:
        return catalog[tag](**{k: float(v) for k, v in kw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from exc


def initial_values(spec: dict, grid: Grid, source: Optional[str] = None) -> np.ndarray:
    x = grid.cell_centers
    L = grid.length
    tag = spec.get("tag", "constant")
    if tag == "constant":
        return np.full(grid.n_cells, float(spec.get("value", 0.5)))
    if tag == "bump":
        c, w = float(spec.get("center", 0.5 * L)), float(spec.get("width", 0.1 * L))
        height, floor = float(spec.get("height", 1.0)), float(spec.get("floor", 0.0))
        shape = spec.get("shape", "gaussian")
        if shape == "gaussian":
            return floor + height * np.exp(-0.5 * ((x - c) / w) ** 2)
        if shape == "parabolic":
            return floor + height * np.maximum(1.0 - ((x - c) / w) ** 2, 0.0)
        raise ConfigError(f"unknown bump shape {shape!r}")
    if tag == "tanh-interface":
        c, w = float(spec.get("center", 0.5 * L)), float(spec.get("width", 0.05 * L))
        lo, hi = float(spec.get("low", 0.05)), float(spec.get("high", 0.95))
        return lo + 0.5 * (hi - lo) * (1.0 + np.tanh((x - c) / w))
    if tag == "cosine":
        mean = float(spec.get("mean", 0.5))
        amps = spec.get("amplitudes", [0.0, 0.1])
        return mean + sum(float(a) * np.cos(k * np.pi * x / L) for k, a in enumerate(amps) if k > 0)
    if tag == "file":
        path = Path(spec["path"])
        if not path.is_absolute() and source is not None:
            path = Path(source).parent / path
        return _read_profile(path, grid)
    raise ConfigError(f"unknown initial condition tag {tag!r}")


def _read_profile(path: Path, grid: Grid) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        xs = np.array([float(r["x"]) for r in rows])
        us = np.array([float(r["u"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read initial profile {path}: {exc}") from exc
    if xs.size == grid.n_cells and np.allclose(xs, grid.cell_centers):
        return us
    return np.interp(grid.cell_centers, xs, us)


def _get(d: dict, key: str, default: Any = None, kind=None):
    v = d.get(key, default)
    if kind is not None and v is not None:
        try:
            v = kind(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
    return v


def from_dict(raw: dict, source: Optional[str] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    for sec in ("problem", "scheme"):
        if sec not in raw:
            raise ConfigError(f"missing section {sec!r}")
    dom, grd, prob, sch = raw.get("domain", {}), raw.get("grid", {}), raw["problem"], raw["scheme"]
    out = raw.get("outputs", {}) or {}
    checks = list(raw.get("checks", ["structure", "energy_estimate"]) or [])
    bad = [c for c in checks if c not in KNOWN_CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; known: {list(KNOWN_CHECKS)}")
    for key in ("mobility", "energy"):
        if key not in prob:
            raise ConfigError(f"problem.{key} missing")
    tau = _get(sch, "tau", kind=float)
    T = _get(sch, "T_final", kind=float)
    if tau is None or T is None:
        raise ConfigError("scheme.tau and scheme.T_final are required")
    mass = prob.get("mass")
    cfg = RunConfig(
        length=_get(dom, "L", 1.0, float),
        n_cells=_get(grd, "n_cells", 64, int),
        mobility=dict(prob["mobility"]),
        energy=dict(prob["energy"]),
        mass=None if mass is None else float(mass),
        tau=tau,
        T_final=T,
        backend=_get(sch, "backend", "dynamic", str),
        K=_get(sch, "K", 8, int),
        solver=_get(sch, "solver", "joint", str),
        eps_V=_get(sch, "eps_V", 0.0, float),
        delta=_get(sch, "delta", 0.0, float),
        initial=dict(raw.get("initial", {"tag": "constant"})),
        checks=checks,
        out_dir=str(out.get("directory", "out")),
        snapshot_every=int(out.get("snapshot_every", 1)),
        formats=list(out.get("formats", ["csv", "json", "dat"])),
        compare=dict(raw.get("compare", {}) or {}),
        sweep=dict(raw.get("sweep", {}) or {}),
        seed=int(raw.get("seed", 0)),
        source=source,
    )
    if cfg.backend not in ("dynamic", "frozen"):
        raise ConfigError(f"unknown backend {cfg.backend!r}")
    if cfg.n_cells < 3 or cfg.K < 1 or cfg.snapshot_every < 1:
        raise ConfigError("n_cells >= 3, K >= 1 and snapshot_every >= 1 required")
    if not (math.isfinite(cfg.length) and cfg.length > 0):
        raise ConfigError("domain.L must be positive")
    return cfg


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return from_dict(raw, str(path))
