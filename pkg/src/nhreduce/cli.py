"""Command-line front end: ``nhreduce simulate | check | compare``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import llreduce, particle, suslov
from .dldps import NoConvergence, SingularJacobian, integrate, verify_trajectory
from .connections import lift_path
from .runio import (PARTICLE_STAGE, ConfigError, SchemaError, build_system, initial_pair,
                    load_config, read_csv, write_csv)

log = logging.getLogger("nhreduce")

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4
DEFAULT_TOL = 1e-10
DRIFT_TOL = 1e-9
MODES = ("project", "reconstruct", "staged", "momentum", "connection")


def _setup_logging():
    level = os.environ.get("NHREDUCE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _report_path(out):
    out = Path(out)
    return out.with_name(out.stem + ".report.json")


# ---------------------------------------------------------------- simulate

def run_simulation(config_path, out, tol=DEFAULT_TOL):
    """Integrate, write the CSV and a JSON report next to it; returns the exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {"config": cfg.to_dict(), "tol": tol}
    t0 = time.perf_counter()
    try:
        system = build_system(cfg)
        path = integrate(system, initial_pair(cfg), cfg.steps, tol=cfg.newton_tol,
                         max_iter=cfg.max_iter)
    except (NoConvergence, SingularJacobian, llreduce.NearSingularLegendre) as exc:
        report.update(status="no_convergence", error=str(exc), step=getattr(exc, "step", None))
        _report_path(out).write_text(json.dumps(report, indent=2) + "\n")
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0
    write_csv(out, cfg.system, cfg.level, path)
    rep = verify_trajectory(system, path, tol=tol, drift_tol=DRIFT_TOL)
    rep.wall_time = elapsed
    report.update(status="ok" if rep.passed else "verification_failed", **rep.summary())
    _report_path(out).write_text(json.dumps(report, indent=2) + "\n")
    log.info("%s/%s: %d steps in %.3fs", cfg.system, cfg.level, cfg.steps, elapsed)
    return EXIT_OK if rep.passed else EXIT_VERIFY


def _sweep_job(args):
    cfg, out, tol = args
    return run_simulation(cfg, out, tol)


def cmd_simulate(args):
    if args.sweep:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        jobs = [(c, str(outdir / (Path(c).stem + ".csv")), args.tol) for c in args.sweep]
        with ProcessPoolExecutor() as pool:
            codes = list(pool.map(_sweep_job, jobs))
        for (c, o, _), code in zip(jobs, codes):
            print(f"{c}: exit {code} -> {o}")
        return max(codes, default=EXIT_OK)
    if not args.config or not args.out:
        print("simulate needs --config and --out (or --sweep)", file=sys.stderr)
        return EXIT_INPUT
    return run_simulation(args.config, args.out, args.tol)


# ---------------------------------------------------------------- check

def cmd_check(args):
    try:
        cfg = load_config(args.config)
        _, path = read_csv(args.csv, expect=(cfg.system, cfg.level))
        system = build_system(cfg)
        rep = verify_trajectory(system, path, tol=args.tol, drift_tol=DRIFT_TOL)
    except (ConfigError, SchemaError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NoConvergence, llreduce.NearSingularLegendre) as exc:
        print(json.dumps({"pass": False, "error": str(exc)}, indent=2))
        return EXIT_FAIL
    print(json.dumps(rep.summary(), indent=2))
    return EXIT_OK if rep.passed else EXIT_FAIL


# ---------------------------------------------------------------- compare

class Mismatch(ValueError):
    pass


def _same_length(a, b):
    if len(a) != len(b):
        raise Mismatch(f"trajectories have {len(a)} and {len(b)} pairs")


def _suslov_projection(full, level, cfg):
    if level == "eta":
        h = cfg.h_matrix if cfg is not None else None
        return llreduce.project_path(full, h)
    if cfg is None:
        raise Mismatch("the momentum level needs --config for the inertia tensor")
    spec = suslov.suslov_spec(cfg.inertia)
    return [llreduce.momentum_pair(spec, pp.eps[0]) for pp in llreduce.project_path(full)]


def _compare_project(fkey, full, rkey, red, cfg):
    _same_length(full, red)
    if fkey[0] == "suslov":
        proj = _suslov_projection(full, rkey[1], cfg)
    else:
        proj = particle.project_full(full, PARTICLE_STAGE[rkey[1]])
    return {"deviation": particle.path_distance(proj, red)}


def _compare_reconstruct(fkey, full, rkey, red, cfg):
    _same_length(full, red)
    seed = full[0].eps[1] if len(full) else None
    if seed is None:
        return {"deviation": 0.0}
    if fkey[0] == "suslov":
        if rkey[1] != "eta":
            raise Mismatch("reconstruction starts from the eta level")
        h = cfg.h_matrix if cfg is not None else None
        lifted = llreduce.reconstruct(red, seed, h)
    else:
        stage = PARTICLE_STAGE[rkey[1]]
        if stage == "H":
            lifted = lift_path(particle.UPSILON_H, red, seed)
        elif stage == "G":
            lifted = particle.reconstruct_from_g(red, seed)
        else:
            lifted = particle.reconstruct_two_stage(red, seed)
    return {"deviation": particle.path_distance(lifted, full)}


def _compare_staged(fkey, full, rkey, red, cfg, tol):
    if fkey[0] != "particle" or rkey[1] not in ("g_reduced", "gh_reduced"):
        raise Mismatch("staged mode compares a full particle file with a g_reduced or gh_reduced file")
    _same_length(full, red)
    h_step = cfg.h_step if cfg is not None else 0.1
    if rkey[1] == "gh_reduced":
        dev = particle.path_distance([particle.staged_f_map(pp) for pp in red],
                                     particle.project_full(full, "G"))
    else:
        dev = particle.path_distance([particle.staged_f_map(pp) for pp in
                                      particle.project_full(full, "G_over_H")], red)
    rep = particle.staged_check(h_step, full, tol=tol)
    return {"deviation": dev, "stages_pass": rep.passed, "first_failure": rep.first_failure}


def _compare_momentum(fkey, full, rkey, red, cfg):
    if cfg is None or cfg.system != "suslov":
        raise Mismatch("momentum mode needs a Suslov --config")
    spec = suslov.suslov_spec(cfg.inertia)
    dev = 0.0
    for eta in spec.subspace.basis:
        r = llreduce.momentum_evolution_check(spec, full, eta)
        if r.size:
            dev = max(dev, float(np.max(np.abs(r))))
    out = {"momentum_evolution": dev}
    if rkey == ("suslov", "momentum"):
        _same_length(full, red)
        proj = _suslov_projection(full, "momentum", cfg)
        out["projection"] = particle.path_distance(proj, red)
        eps = [llreduce.eps_residual(spec, red[k].eps[0], red[k + 1].eps[0])
               for k in range(len(red) - 1)]
        out["eps_residual"] = float(np.max(np.abs(eps))) if eps else 0.0
    out["deviation"] = max(v for v in out.values())
    return out


def _compare_connection(fkey, full, rkey, red, cfg, tol):
    if cfg is None or cfg.system != "suslov" or cfg.h_matrix is None:
        raise Mismatch("connection mode needs a Suslov --config with nonzero connection_h")
    if rkey != ("suslov", "eta"):
        raise Mismatch("connection mode compares a full file with an eta file")
    _same_length(full, red)
    h = cfg.h_matrix
    spec = suslov.suslov_spec(cfg.inertia)
    rep = llreduce.connection_independence_check(spec, h, full, tol=max(tol, 1e-9))
    proj = llreduce.project_path(full, h)
    return {"deviation": max(particle.path_distance(proj, red), rep.map_deviation),
            "reduced_pass": rep.base_report.passed and rep.shifted_report.passed}


def cmd_compare(args):
    try:
        cfg = load_config(args.config) if args.config else None
        fkey, full = read_csv(args.full)
        rkey, red = read_csv(args.reduced)
        if fkey[1] != "full" or rkey[0] != fkey[0]:
            raise Mismatch(f"cannot compare {fkey} with {rkey}")
        if cfg is not None and cfg.system != fkey[0]:
            raise Mismatch("config system does not match the trajectory files")
        mode = args.mode
        if mode == "project":
            res = _compare_project(fkey, full, rkey, red, cfg)
        elif mode == "reconstruct":
            res = _compare_reconstruct(fkey, full, rkey, red, cfg)
        elif mode == "staged":
            res = _compare_staged(fkey, full, rkey, red, cfg, args.tol)
        elif mode == "momentum":
            res = _compare_momentum(fkey, full, rkey, red, cfg)
        else:
            res = _compare_connection(fkey, full, rkey, red, cfg, args.tol)
    except (ConfigError, SchemaError, Mismatch) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    ok = res["deviation"] <= args.tol and res.get("stages_pass", True) and res.get("reduced_pass", True)
    res.update({"mode": args.mode, "tol": args.tol, "max_deviation": res["deviation"], "pass": ok})
    print(json.dumps(res, indent=2, default=str))
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------- entry point

def build_parser():
    p = argparse.ArgumentParser(prog="nhreduce",
                                description="Discrete nonholonomic systems, reduction and checks.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", help="integrate a configured system and write a CSV")
    s.add_argument("--config")
    s.add_argument("--out", help="CSV path (directory with --sweep)")
    s.add_argument("--tol", type=float, default=DEFAULT_TOL, help="verification tolerance")
    s.add_argument("--sweep", nargs="+", metavar="CONFIG", help="run several configs in parallel")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("check", help="verify a trajectory CSV against its system")
    c.add_argument("csv")
    c.add_argument("--config", required=True)
    c.add_argument("--tol", type=float, default=DEFAULT_TOL)
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("compare", help="cross-level correspondence checks")
    m.add_argument("full")
    m.add_argument("reduced")
    m.add_argument("--mode", choices=MODES, default="project")
    m.add_argument("--config")
    m.add_argument("--tol", type=float, default=1e-9)
    m.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
