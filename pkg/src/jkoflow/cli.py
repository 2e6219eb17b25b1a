"""Command line entry point: ``jkoflow {run,check,sweep,compare}``.

Exit codes: 0 ok, 1 check failure, 2 configuration error, 3 solver failure.
Everything except ``timing.json`` is byte-identical across repeated runs.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import diagnostics as dg
from .config import RunConfig, load
from .errors import ConfigError, InfeasibleConstraint, JkoFlowError, PositivityLoss
from .flows import direct_pde_solve
from .jko import run as jko_run
from .physics import validate_G, validate_LSC, validate_M, validate_M_half

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
SUMMARY_SCHEMA = "1"


# ---------------------------------------------------------------------------
# serialization


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class _Writer:
    """Writes files under one directory and keeps a sha256 manifest."""

    def __init__(self, root: Path):
        self.root = root
        root.mkdir(parents=True, exist_ok=True)
        self.manifest = {}

    def text(self, rel: str, content: str):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        data = content.encode()
        p.write_bytes(data)
        self.manifest[rel] = hashlib.sha256(data).hexdigest()

    def json(self, rel: str, obj):
        self.text(rel, _dumps(obj))


def _csv_profile(x, u) -> str:
    lines = ["x,u"] + [f"{a!r},{b!r}" for a, b in zip(x.tolist(), u.tolist())]
    return "\n".join(lines) + "\n"


def _dat(columns, header: str) -> str:
    rows = [" ".join(repr(float(v)) for v in row) for row in zip(*columns)]
    return f"# {header}\n" + "\n".join(rows) + "\n"


def _snapshot_steps(n_steps: int, every: int) -> list:
    steps = list(range(0, n_steps + 1, every))
    if steps[-1] != n_steps:
        steps.append(n_steps)
    return steps


def write_trajectory(w: _Writer, traj, cfg: RunConfig, prefix: str = ""):
    x = traj.grid.cell_centers
    steps = _snapshot_steps(traj.n_steps, cfg.snapshot_every)
    snaps = []
    for n in steps:
        t = n * traj.tau
        u = traj.iterates[n].values
        entry = {"n": n, "t": t}
        if "csv" in cfg.formats:
            rel = f"{prefix}snapshots/u_{n:06d}.csv"
            w.text(rel, _csv_profile(x, u))
            entry["csv"] = rel
        if "dat" in cfg.formats:
            rel = f"{prefix}plots/u_{n:06d}.dat"
            w.text(rel, _dat([x, u], f"x u  (t = {t!r})"))
            entry["dat"] = rel
        snaps.append(entry)
    if "json" in cfg.formats:
        w.json(f"{prefix}trajectory.json", {
            "tau": traj.tau, "n_steps": traj.n_steps, "n_cells": traj.grid.n_cells, "length": traj.grid.length,
            "records": [r.as_dict() for r in traj.records], "snapshots": snaps,
        })
    if "dat" in cfg.formats:
        t = traj.times
        w.text(f"{prefix}plots/energy.dat", _dat([t, traj.energies], "t E"))
        w.text(f"{prefix}plots/entropy.dat", _dat([t, traj.entropies], "t U"))
        w.json(f"{prefix}plots/index.json", {
            "energy": {"file": f"{prefix}plots/energy.dat", "columns": ["t", "E"]},
            "entropy": {"file": f"{prefix}plots/entropy.dat", "columns": ["t", "U"]},
            "profiles": [{"t": s["t"], "file": s["dat"], "columns": ["x", "u"]} for s in snaps],
        })
    return snaps


def _stats(traj) -> dict:
    recs = traj.records[1:]
    status = {}
    for r in recs:
        status[r.status] = status.get(r.status, 0) + 1
    its = [r.iterations for r in recs]
    return {
        "steps": len(recs),
        "status_counts": dict(sorted(status.items())),
        "newton_iterations": {"total": int(sum(its)), "max": int(max(its, default=0))},
        "max_stationarity": float(max((r.stationarity for r in recs), default=0.0)),
        "floored_faces": int(sum(r.floored_faces for r in recs)),
        "final_energy": float(traj.energies[-1]),
        "initial_energy": float(traj.energies[0]),
    }


# ---------------------------------------------------------------------------
# commands


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    kw = {}
    if getattr(args, "backend", None):
        kw["backend"] = args.backend
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "out", None):
        kw["out_dir"] = args.out
    return cfg.with_overrides(**kw) if kw else cfg


def execute_run(cfg: RunConfig, out: Path, profile: str = "default") -> tuple:
    """Run one configuration and write its artifacts; returns ``(exit_code, summary)``."""
    u0 = cfg.initial_density()
    spec = cfg.problem(u0)
    jcfg = cfg.jko_config()
    w = _Writer(out)
    t0 = time.perf_counter()
    traj = jko_run(u0, jcfg, spec)
    t_run = time.perf_counter() - t0
    write_trajectory(w, traj, cfg)
    t0 = time.perf_counter()
    reports = dg.run_checks(traj, cfg.checks, profile)
    t_checks = time.perf_counter() - t0
    summary = {
        "schema": SUMMARY_SCHEMA,
        "version": __version__,
        "config": cfg.echo(),
        "problem": spec.describe(),
        "tolerances": dg.tolerance_table(profile),
        "checks": [r.as_dict() for r in reports],
        "statistics": _stats(traj),
    }
    if cfg.compare:
        summary["comparison"] = _comparison(traj, u0, spec, cfg)
    ok = all(r.status != "fail" for r in reports)
    summary["passed"] = ok
    summary["manifest"] = dict(sorted(w.manifest.items()))
    (out / "summary.json").write_text(_dumps(summary))
    (out / "timing.json").write_text(_dumps({"run_seconds": t_run, "check_seconds": t_checks}))
    return (EXIT_OK if ok else EXIT_CHECK), summary


def _comparison(traj, u0, spec, cfg: RunConfig) -> dict:
    tau_pde = float(cfg.compare.get("tau_pde", cfg.tau))
    box = int(np.count_nonzero(traj.values() < 0) + np.count_nonzero(traj.values() > spec.M))
    res = {"tau_pde": tau_pde, "jko_box_violations": box, "table": []}
    try:
        direct = direct_pde_solve(u0, spec, tau_pde, cfg.T_final)
        res["direct_status"] = "ok"
    except PositivityLoss as exc:
        direct = exc.trajectory
        res["direct_status"] = "positivity_loss"
        res["direct_failure_time"] = exc.time
    res["positivity_contrast"] = res["direct_status"] == "positivity_loss" and box == 0
    ratio = cfg.tau / tau_pde
    stride = int(round(ratio))
    if abs(ratio - stride) > 1e-9 or stride < 1:
        res["note"] = "tau is not a multiple of tau_pde: no matched times"
        return res
    for n in _snapshot_steps(traj.n_steps, cfg.snapshot_every):
        k = n * stride
        if direct is None or k >= len(direct.iterates):
            break
        d = np.abs(traj.iterates[n].values - direct.iterates[k].values)
        res["table"].append({"t": n * cfg.tau, "linf": float(d.max()),
                             "l2": float(math.sqrt(traj.grid.h * float(d @ d)))})
    res["linf_final"] = res["table"][-1]["linf"] if res["table"] and res["direct_status"] == "ok" else None
    return res


def cmd_run(args) -> int:
    cfg = _apply_flags(load(args.config), args)
    code, summary = execute_run(cfg, Path(cfg.out_dir), args.tol_profile)
    for c in summary["checks"]:
        print(f"{c['name']:<22} {c['status']:<13} lhs={c['lhs']:.6g} rhs={c['rhs']:.6g}")
    print(f"wrote {cfg.out_dir}/summary.json")
    return code


HYPOTHESIS_MODES = {"lsc": ("M", "LSC", "G"), "general": ("M", "M_half", "G")}


def hypothesis_reports(cfg: RunConfig) -> dict:
    spec = cfg.problem()
    mob = spec.mobility
    return {"M": validate_M(mob), "LSC": validate_LSC(mob), "M_half": validate_M_half(mob), "G": validate_G(spec)}


def cmd_check(args) -> int:
    cfg = load(args.config)
    reps = hypothesis_reports(cfg)
    for name, r in reps.items():
        print(f"({name}) {'pass' if r.passes else 'fail'}  {_clean(r.values)}")
    verdict = {m: all(reps[k].passes for k in keys) for m, keys in HYPOTHESIS_MODES.items()}
    for m, ok in verdict.items():
        print(f"{m}-mode: {'pass' if ok else 'fail'}")
    return EXIT_OK if verdict[args.mode] else EXIT_CHECK


def _sweep_cells(cfg: RunConfig) -> list:
    axes = {k: list(v) for k, v in sorted(cfg.sweep.items())}
    allowed = {"tau", "n_cells", "K", "delta"}
    bad = set(axes) - allowed
    if bad:
        raise ConfigError(f"sweep over {sorted(bad)} not supported; use {sorted(allowed)}")
    if not axes:
        return [{}]
    keys = list(axes)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


def _sweep_worker(payload):
    cfg, params, out, profile = payload
    cell = cfg.with_overrides(**params)
    try:
        code, summary = execute_run(cell, Path(out), profile)
        return {"params": params, "exit": code, "passed": summary["passed"],
                "checks": {c["name"]: c["status"] for c in summary["checks"]}}
    except JkoFlowError as exc:
        return {"params": params, "exit": EXIT_SOLVER, "passed": False, "error": f"{type(exc).__name__}: {exc}"}


def _final_profile(out: Path) -> Optional[np.ndarray]:
    tj = out / "trajectory.json"
    if not tj.exists():
        return None
    meta = json.loads(tj.read_text())
    last = meta["snapshots"][-1].get("csv")
    if last is None:
        return None
    data = np.loadtxt(out / last, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1]


def _restrict(u: np.ndarray, n: int) -> Optional[np.ndarray]:
    if u.size == n:
        return u
    if u.size % n:
        return None
    return u.reshape(n, -1).mean(axis=1)


def cmd_sweep(args) -> int:
    cfg = _apply_flags(load(args.config), args)
    root = Path(cfg.out_dir)
    cells = _sweep_cells(cfg)
    payloads = [(cfg, p, str(root / f"cell_{i:03d}"), args.tol_profile) for i, p in enumerate(cells)]
    workers = max(1, min(args.workers or os.cpu_count() or 1, len(cells)))
    if workers == 1:
        results = [_sweep_worker(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_worker, payloads))  # map preserves submission order
    # self-convergence: L2 distance between consecutive cells along the sweep order
    finals = [_final_profile(root / f"cell_{i:03d}") for i in range(len(cells))]
    L = cfg.length
    for i in range(len(cells) - 1):
        a, b = finals[i], finals[i + 1]
        d = None
        if a is not None and b is not None:
            n = min(a.size, b.size)
            ra, rb = _restrict(a, n), _restrict(b, n)
            if ra is not None and rb is not None:
                d = float(math.sqrt(L / n * float(np.sum((ra - rb) ** 2))))
        results[i]["l2_to_next"] = d
    for i in range(2, len(cells)):
        d1, d2 = results[i - 2].get("l2_to_next"), results[i - 1].get("l2_to_next")
        results[i - 1]["contraction"] = d1 / d2 if d1 and d2 else None
    table = {"schema": SUMMARY_SCHEMA, "version": __version__, "axes": cfg.sweep, "cells": results}
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(_dumps(table))
    lines = ["cell," + ",".join(sorted(cfg.sweep)) + ",exit,passed,l2_to_next"]
    for i, r in enumerate(results):
        vals = [repr(r["params"][k]) for k in sorted(cfg.sweep)]
        lines.append(",".join([str(i)] + vals + [str(r["exit"]), str(r["passed"]), repr(r.get("l2_to_next"))]))
    (root / "sweep.csv").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK if all(r["exit"] == EXIT_OK for r in results) else EXIT_CHECK


def cmd_compare(args) -> int:
    cfg = _apply_flags(load(args.config), args)
    if not cfg.compare:
        cfg = cfg.with_overrides(compare={"tau_pde": cfg.tau})
    out = Path(cfg.out_dir)
    u0 = cfg.initial_density()
    spec = cfg.problem(u0)
    traj = jko_run(u0, cfg.jko_config(), spec)
    rep = _comparison(traj, u0, spec, cfg)
    rep = {"schema": SUMMARY_SCHEMA, "version": __version__, "config": cfg.echo(), "comparison": rep}
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(_dumps(rep))
    c = rep["comparison"]
    print(f"direct solver: {c['direct_status']}" + (f" at t = {c['direct_failure_time']:.6g}"
                                                    if c["direct_status"] == "positivity_loss" else ""))
    print(f"jko box violations: {c['jko_box_violations']}")
    for row in c["table"]:
        print(f"t={row['t']:.6g}  linf={row['linf']:.3e}  l2={row['l2']:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jkoflow", description="Minimizing-movement solver for degenerate fourth-order flows")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--tol-profile", choices=("default", "strict"), default="default")
        if out:
            sp.add_argument("--out", help="output directory (overrides outputs.directory)")
            sp.add_argument("--backend", choices=("dynamic", "frozen"))
            sp.add_argument("--seed", type=int)

    common(sub.add_parser("run", help="run the scheme and write artifacts"))
    sp = sub.add_parser("check", help="validate the structural hypotheses of a configuration")
    common(sp, out=False)
    sp.add_argument("--mode", choices=tuple(HYPOTHESIS_MODES), default="lsc")
    sp = sub.add_parser("sweep", help="run a parameter sweep")
    common(sp)
    sp.add_argument("--workers", type=int, default=None)
    common(sub.add_parser("compare", help="compare against the direct semi-implicit solver"))
    return p


COMMANDS = {"run": cmd_run, "check": cmd_check, "sweep": cmd_sweep, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InfeasibleConstraint) as exc:
        print(f"configuration error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JkoFlowError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
