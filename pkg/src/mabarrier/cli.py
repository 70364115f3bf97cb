"""Config-driven command line: ``mabarrier {barrier,solve,sweep,verify,analyze} CONFIG``.

Every command writes a JSON report (top-level ``"schema": 1``) to the
configured output directory and exits 0 iff every verdict in it passes.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from . import domain as dom
from .analysis import holder_exponent_fit, interior_bounds
from .barrier import barrier_constants, build_barrier, verify_subsolution
from .domain import boundary_frame
from .errors import ConfigError, DivergenceError, MABarrierError, StructureError
from .grid import GridFunction, build_grid, convexity_defect
from .rhs import RhsSpec, check_structure, rhs_from_dict
from .solver import SolveConfig, solve

SCHEMA = 1
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("mabarrier")

DIAGNOSTIC_DEFAULTS = {"holder": True, "interior_bounds": False, "level_fraction": 0.1}
BARRIER_DEFAULTS = {"boundary_points": 4, "base_points": None, "samples": 10000}
SWEEP_DEFAULTS = {"n": 2, "A": 1.0, "alpha": [0.0], "beta": [3.0], "gamma": [0.0], "h": [],
                  "samples": 2000, "solve": False, "workers": 1}


@dataclass
class ExperimentConfig:
    domain: dom.ConvexDomain
    rhs: RhsSpec | None
    solver: SolveConfig
    barrier: dict = field(default_factory=lambda: dict(BARRIER_DEFAULTS))
    diagnostics: dict = field(default_factory=lambda: dict(DIAGNOSTIC_DEFAULTS))
    sweep: dict = field(default_factory=lambda: dict(SWEEP_DEFAULTS))
    output: str = "out"
    seed: int = 0
    solution: str | None = None
    raw: dict = field(default_factory=dict)


def _merge(defaults, given, section):
    given = given or {}
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    return {**defaults, **given}


def parse_config(raw: dict, base_dir=".") -> ExperimentConfig:
    """Validate a parsed config mapping; every numeric constraint is rechecked here."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {"domain", "rhs", "solver", "barrier", "diagnostics", "sweep", "output", "seed", "solution"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "domain" not in raw:
        raise ConfigError("config needs a domain")
    try:
        domain = domain_from_config(raw["domain"])
        rhs = rhs_from_dict(raw["rhs"], domain.dim) if raw.get("rhs") is not None else None
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed domain or rhs entry: {exc}") from exc
    solver_keys = {f.name for f in fields(SolveConfig)}
    sraw = dict(raw.get("solver") or {})
    bad = set(sraw) - solver_keys
    if bad:
        raise ConfigError(f"unknown solver keys: {sorted(bad)}")
    for key in ("negativity_center",):
        if sraw.get(key) is not None:
            sraw[key] = tuple(sraw[key])
    solver = SolveConfig(**sraw)
    out = raw.get("output", "out")
    if not os.path.isabs(out):
        out = os.path.join(base_dir, out)
    solution = raw.get("solution")
    if solution is not None and not os.path.isabs(solution):
        solution = os.path.join(base_dir, solution)
    return ExperimentConfig(
        domain=domain, rhs=rhs, solver=solver,
        barrier=_merge(BARRIER_DEFAULTS, raw.get("barrier"), "barrier"),
        diagnostics=_merge(DIAGNOSTIC_DEFAULTS, raw.get("diagnostics"), "diagnostics"),
        sweep=_merge(SWEEP_DEFAULTS, raw.get("sweep"), "sweep"),
        output=out, seed=int(raw.get("seed", 0)), solution=solution, raw=raw)


def domain_from_config(desc):
    if desc.get("kind") == "square":
        return dom.unit_square(desc.get("lo", 0.0), desc.get("hi", 1.0))
    return dom.from_dict(desc)


def load_config(path) -> ExperimentConfig:
    """JSON or YAML file (YAML is a superset, so one loader reads both)."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


# -- output ----------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def dump_json(report, path):
    text = json.dumps(_clean({"schema": SCHEMA, **report}), indent=2, sort_keys=True) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text


def _outdir(cfg):
    os.makedirs(cfg.output, exist_ok=True)
    return cfg.output


def _need_rhs(cfg):
    if cfg.rhs is None:
        raise ConfigError("this command needs an rhs entry")
    return cfg.rhs


# -- commands ----------------------------------------------------------------

def cmd_verify(cfg: ExperimentConfig):
    spec = _need_rhs(cfg)
    rep = check_structure(spec, cfg.domain, int(cfg.barrier["samples"]), cfg.seed)
    report = {"command": "verify", "rhs": spec.to_dict(), "domain": cfg.domain.to_dict(),
              "structure": rep.to_dict(), "passed": rep.passed}
    dump_json(report, os.path.join(_outdir(cfg), "verify.json"))
    return (EXIT_OK if rep.passed else EXIT_FAIL), report


def cmd_barrier(cfg: ExperimentConfig):
    spec = _need_rhs(cfg)
    params = build_barrier(cfg.domain, spec)
    base = cfg.barrier["base_points"]
    if base is None:
        base = cfg.domain.boundary_points(int(cfg.barrier["boundary_points"]))
    members = []
    for i, x0 in enumerate(np.atleast_2d(np.asarray(base, dtype=float))):
        member = params.at(boundary_frame(cfg.domain, x0))
        rep = verify_subsolution(member, spec, cfg.domain, int(cfg.barrier["samples"]), seed=cfg.seed + i)
        members.append(rep.to_dict())
    passed = all(m["passed"] for m in members)
    report = {"command": "barrier", "rhs": spec.to_dict(), "domain": cfg.domain.to_dict(),
              "constants": params.constants(), "members": members, "passed": passed}
    dump_json(report, os.path.join(_outdir(cfg), "barrier.json"))
    return (EXIT_OK if passed else EXIT_FAIL), report


def _diagnostics(cfg, u, spec):
    out = {}
    params = build_barrier(cfg.domain, spec)
    if cfg.diagnostics["holder"]:
        try:
            out["holder"] = holder_exponent_fit(u.grid, u, lambda0=params.lambda0).to_dict()
        except (MABarrierError, ValueError) as exc:
            out["holder"] = {"passed": False, "error": str(exc)}
    if cfg.diagnostics["interior_bounds"]:
        t = -float(cfg.diagnostics["level_fraction"]) * abs(float(u.interior.min()))
        try:
            out["interior_bounds"] = interior_bounds(u.grid, u, t, spec, params).to_dict()
        except MABarrierError as exc:
            out["interior_bounds"] = {"passed": False, "error": str(exc)}
    return out


def cmd_solve(cfg: ExperimentConfig):
    spec = _need_rhs(cfg)
    outdir = _outdir(cfg)
    try:
        u, rep = solve(cfg.domain, spec, cfg.solver)
    except DivergenceError as exc:
        partial = exc.report.to_dict() if exc.report is not None else {}
        report = {"command": "solve", "error": str(exc), "partial": partial, "passed": False}
        dump_json(report, os.path.join(outdir, "solve.json"))
        return EXIT_DIVERGED, report
    u.to_csv(os.path.join(outdir, "solution.csv"))
    diagnostics = _diagnostics(cfg, u, spec)
    passed = rep.passed and all(d.get("passed", False) for d in diagnostics.values())
    report = {"command": "solve", "rhs": spec.to_dict(), "domain": cfg.domain.to_dict(),
              "config": cfg.solver.to_dict(), "report": rep.to_dict(), "diagnostics": diagnostics,
              "u_at_nearest_center": rep.details["negativity"]["u_at_nearest_node"], "passed": passed}
    dump_json(report, os.path.join(outdir, "solve.json"))
    return (EXIT_OK if passed else EXIT_FAIL), report


def cmd_analyze(cfg: ExperimentConfig):
    spec = _need_rhs(cfg)
    path = cfg.solution or os.path.join(cfg.output, "solution.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no saved solution at {path}")
    grid = build_grid(cfg.domain, cfg.solver.h, cfg.solver.stencil_width, cfg.solver.snap,
                      cfg.solver.closure)
    u = GridFunction.from_csv(grid, path)
    diagnostics = _diagnostics(cfg, u, spec)
    defect = convexity_defect(grid, u, 0.0)
    diagnostics["convexity"] = {"defect": defect, "passed": defect <= 10 * cfg.solver.tolerance}
    passed = all(d.get("passed", False) for d in diagnostics.values())
    report = {"command": "analyze", "solution": os.path.basename(path), "diagnostics": diagnostics,
              "passed": passed}
    dump_json(report, os.path.join(_outdir(cfg), "analyze.json"))
    return (EXIT_OK if passed else EXIT_FAIL), report


SWEEP_COLUMNS = ["alpha", "beta", "gamma", "h", "status", "lambda0", "N0", "M0", "min_ratio",
                 "residual", "holder_exponent", "passed", "message"]


def sweep_row(job):
    """One sweep combination; never raises, failures are recorded in the row."""
    domain_desc, n, A, alpha, beta, gamma, h, samples, do_solve, seed, solver = job
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update(alpha=alpha, beta=beta, gamma=gamma, h="" if h is None else h)
    try:
        domain = domain_from_config(domain_desc)
        spec = RhsSpec.envelope(n, A, alpha, beta, gamma)
        params = barrier_constants(n, A, alpha, beta, gamma, domain.diameter())
    except StructureError as exc:
        row.update(status="rejected", passed=False, message=str(exc))
        return row
    try:
        member = params.at(boundary_frame(domain, domain.boundary_points(1)[0]))
        rep = verify_subsolution(member, spec, domain, samples, seed)
        row.update(status="ok", lambda0=params.lambda0, N0=params.N0, M0=params.M0,
                   min_ratio=rep.min_ratio)
        passed = rep.passed
        if do_solve and h is not None:
            u, srep = solve(domain, spec, SolveConfig(**{**solver, "h": h}))
            fit = holder_exponent_fit(u.grid, u, lambda0=params.lambda0)
            row.update(residual=srep.residual, holder_exponent=fit.exponent)
            passed = passed and srep.passed and fit.passed
        row["passed"] = bool(passed)
    except Exception as exc:  # recorded per row; the sweep carries on
        row.update(status="failed", passed=False, message=f"{type(exc).__name__}: {exc}")
    return row


def cmd_sweep(cfg: ExperimentConfig):
    sw = cfg.sweep
    hs = list(sw["h"]) or [None]
    solver = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.solver.to_dict().items()}
    if solver.get("negativity_center") is not None:
        solver["negativity_center"] = tuple(solver["negativity_center"])
    jobs = [(cfg.raw["domain"], int(sw["n"]), float(sw["A"]), float(a), float(b), float(g),
             None if h is None else float(h), int(sw["samples"]), bool(sw["solve"]), cfg.seed, solver)
            for a, b, g, h in itertools.product(sw["alpha"], sw["beta"], sw["gamma"], hs)]
    workers = max(1, int(sw["workers"]))
    if workers == 1:
        rows = [sweep_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(sweep_row, jobs))
    outdir = _outdir(cfg)
    with open(os.path.join(outdir, "sweep.csv"), "w") as fh:
        fh.write(rows_to_csv(rows))
    passed = bool(rows) and all(r["passed"] is True for r in rows)
    report = {"command": "sweep", "rows": rows, "passed": passed}
    dump_json(report, os.path.join(outdir, "sweep.json"))
    return (EXIT_OK if passed else EXIT_FAIL), report


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


COMMANDS = {"barrier": cmd_barrier, "solve": cmd_solve, "sweep": cmd_sweep,
            "verify": cmd_verify, "analyze": cmd_analyze}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mabarrier", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", help="JSON or YAML experiment file")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        status, report = COMMANDS[args.command](cfg)
    except (ConfigError, StructureError, MABarrierError, yaml.YAMLError, OSError) as exc:
        print(f"mabarrier {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.command}: {'PASS' if report.get('passed') else 'FAIL'} -> {cfg.output}")
    return status


if __name__ == "__main__":
    sys.exit(main())
