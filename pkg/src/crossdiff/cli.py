"""Command-line front end.

Subcommands::

    crossdiff validate --config run.cfg
    crossdiff run      --config run.cfg --out outdir [--seed S] [--monitors a,b]
    crossdiff sweep    --config run.cfg --out outdir --axis tau|h|d_beta --levels 1e-2,5e-3
    crossdiff diagnose --out rundir [--config diag.cfg] [--monitors a,b]

Exit codes: 0 success, 2 invalid or inadmissible configuration, 3 a
monitor failed, 4 the solver failed.  Errors are reported as a single
JSON line on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError, RunConfig, diagnostics_from_mapping, parse_monitors, read_keyvalue,
    read_run_config, run_config_from_mapping,
)
from .diagnostics import DiagnosticsConfig, duality_functional, run_diagnostics
from .grid import Grid, integrate, read_field_csv, write_field_csv
from .model import Inadmissible, validate_params
from .oracles import homogeneous_ode_reference
from .stepper import SchemeConfig, StepFailure, StepSizeViolation, Trajectory, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_MONITOR = 3
EXIT_SOLVER = 4

CONFIG_COPY = "config.cfg"
SNAPSHOT_DIR = "snapshots"
SNAPSHOT_INDEX = "snapshots.csv"
MANIFEST = "manifest.json"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.extra = extra

    def line(self) -> str:
        return json.dumps({"error": self.kind, "exit": self.code, "message": str(self), **self.extra})


@dataclass
class RunManifest:
    config: str
    outdir: str
    artifacts: list[str] = field(default_factory=list)
    seed: int | None = None
    version: str = __version__
    all_pass: bool = True

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")


# --- helpers ---------------------------------------------------------------


def _load(path: str) -> RunConfig:
    try:
        cfg = read_run_config(path)
        validate_params(cfg.params)
        cfg.scheme.check(cfg.params)
    except Inadmissible as exc:
        raise CliError(EXIT_INVALID, "inadmissible", str(exc)) from None
    except StepSizeViolation as exc:
        raise CliError(EXIT_INVALID, "step_size", str(exc)) from None
    except (ConfigError, ValueError, OSError) as exc:
        raise CliError(EXIT_INVALID, "config", str(exc)) from None
    return cfg


def snapshot_steps(N: int) -> list[int]:
    stride = math.ceil(N / 100)
    ks = list(range(0, N + 1, stride))
    if ks[-1] != N:
        ks.append(N)
    return ks


def _with_monitors(diag: DiagnosticsConfig, monitors: str | None) -> DiagnosticsConfig:
    if monitors:
        try:
            diag.monitors = parse_monitors(monitors)
        except ConfigError as exc:
            raise CliError(EXIT_INVALID, "config", str(exc)) from None
    return diag


def _rel(paths, root: Path) -> list[str]:
    return [str(Path(p).relative_to(root)) for p in paths]


# --- commands --------------------------------------------------------------


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    regime = validate_params(cfg.params)
    report = {
        "valid": True,
        "regime": regime.names,
        "strict_validation": cfg.params.strict_validation,
        "tau": cfg.scheme.tau,
        "grid": {"dim": cfg.grid.dim, "n": list(cfg.grid.n), "length": list(cfg.grid.length)},
    }
    print(json.dumps(report))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    diag = _with_monitors(cfg.diagnostics, args.monitors)
    try:
        initial = cfg.initial_state(args.seed)
    except (ConfigError, ValueError, OSError) as exc:
        raise CliError(EXIT_INVALID, "initial_data", str(exc)) from None
    try:
        traj, report = run(initial, cfg.params, cfg.scheme, diag)
    except StepFailure as exc:
        raise CliError(EXIT_SOLVER, "solver", str(exc), step=exc.step_index,
                       cause=type(exc.cause).__name__) from None
    except Exception as exc:  # positivity of the initial state, linear solver errors
        raise CliError(EXIT_SOLVER, "solver", f"{type(exc).__name__}: {exc}") from None

    artifacts = []
    shutil.copyfile(args.config, out / CONFIG_COPY)
    artifacts.append(out / CONFIG_COPY)
    artifacts += write_snapshots(out, traj)
    artifacts += report.write(out)
    manifest = RunManifest(str(args.config), str(out), _rel(artifacts, out), args.seed,
                           all_pass=report.all_pass)
    manifest.artifacts.append(MANIFEST)
    manifest.write(out / MANIFEST)
    print(json.dumps({"all_pass": report.all_pass, "failed": report.failed, "outdir": str(out)}))
    return EXIT_OK if report.all_pass else EXIT_MONITOR


def write_snapshots(out: Path, traj: Trajectory) -> list[Path]:
    snap = out / SNAPSHOT_DIR
    snap.mkdir(exist_ok=True)
    written = []
    ks = snapshot_steps(len(traj) - 1)
    with open(out / SNAPSHOT_INDEX, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time", "u_file", "v_file"])
        for k in ks:
            names = []
            for species, data in (("u", traj.u), ("v", traj.v)):
                path = snap / f"{species}_{k:07d}.csv"
                write_field_csv(path, traj.grid, data[k])
                written.append(path)
                names.append(f"{SNAPSHOT_DIR}/{path.name}")
            w.writerow([k, repr(float(traj.times[k])), *names])
    written.append(out / SNAPSHOT_INDEX)
    return written


def read_snapshots(rundir: str | Path, cfg: RunConfig | None = None) -> Trajectory:
    """Rebuild the snapshot-resolution trajectory stored by ``run``."""
    rundir = Path(rundir)
    if cfg is None:
        cfg = read_run_config(rundir / CONFIG_COPY)
    with open(rundir / SNAPSHOT_INDEX, newline="") as fh:
        rows = list(csv.DictReader(fh))
    times = [float(r["time"]) for r in rows]
    us = [read_field_csv(rundir / r["u_file"], cfg.grid).values for r in rows]
    vs = [read_field_csv(rundir / r["v_file"], cfg.grid).values for r in rows]
    return Trajectory(cfg.grid, cfg.params, np.array(times), np.array(us), np.array(vs))


def snapshot_trajectory(traj: Trajectory) -> Trajectory:
    """In-memory counterpart of `read_snapshots`."""
    ks = snapshot_steps(len(traj) - 1)
    return Trajectory(traj.grid, traj.params, traj.times[ks], traj.u[ks], traj.v[ks])


def cmd_diagnose(args) -> int:
    rundir = Path(args.out)
    try:
        run_cfg = read_run_config(rundir / CONFIG_COPY)
        diag = diagnostics_from_mapping(read_keyvalue(args.config)) if args.config else run_cfg.diagnostics
        traj = read_snapshots(rundir, run_cfg)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        raise CliError(EXIT_INVALID, "config", str(exc)) from None
    diag = _with_monitors(diag, args.monitors)
    report = run_diagnostics(traj, diag)
    report.notes.append(
        "snapshot_resolution: recomputed from stored snapshots, not every step; "
        "per-step inequalities span several scheme steps"
    )
    outdir = rundir / "diagnose"
    report.write(outdir)
    summary_path = outdir / "summary.json"
    summary = json.loads(summary_path.read_text())
    summary["resolution"] = "snapshot"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps({"all_pass": report.all_pass, "resolution": "snapshot", "outdir": str(outdir)}))
    return EXIT_OK


# --- sweep -----------------------------------------------------------------


def _sweep_level(cfg: RunConfig, axis: str, level: float) -> RunConfig:
    if axis == "tau":
        N = max(1, round(cfg.scheme.T / level))
        scheme = SchemeConfig(cfg.scheme.T, N, cfg.scheme.newton_tol, cfg.scheme.newton_max_iter)
        return cfg.with_(scheme=scheme)
    if axis == "h":
        n = tuple(max(3, round(L / level)) for L in cfg.grid.length)
        return cfg.with_(grid=Grid(cfg.grid.dim, n, cfg.grid.length))
    if axis == "d_beta":
        return cfg.with_(params=cfg.params.replace(d_beta=float(level)))
    raise ValueError(f"unknown sweep axis {axis!r}")


def _sweep_worker(job):
    cfg, seed = job
    initial = cfg.initial_state(seed)
    traj, _ = run(initial, cfg.params, cfg.scheme, with_report=False)
    row = {
        "N": cfg.scheme.N,
        "n": cfg.grid.n[0],
        "duality_functional": duality_functional(traj),
        "mass_u_final": integrate(cfg.grid, traj.u[-1]),
        "max_v_final": float(np.max(traj.v[-1])),
    }
    u0, v0 = traj.u[0], traj.v[0]
    if np.ptp(u0) == 0 and np.ptp(v0) == 0:
        ref = homogeneous_ode_reference(cfg.params, float(u0.flat[0]), float(v0.flat[0]), cfg.scheme.T)
        row["error"] = max(float(np.max(np.abs(traj.u[-1] - ref.u))), float(np.max(np.abs(traj.v[-1] - ref.v))))
    return row


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if not args.levels:
        raise CliError(EXIT_INVALID, "config", "--levels is required for sweep")
    try:
        levels = [float(s) for s in args.levels.split(",") if s.strip()]
        jobs = [(_sweep_level(cfg, args.axis, lv), args.seed) for lv in levels]
        for job_cfg, _ in jobs:
            validate_params(job_cfg.params)
            job_cfg.scheme.check(job_cfg.params)
    except (Inadmissible, StepSizeViolation, ValueError) as exc:
        raise CliError(EXIT_INVALID, "config", str(exc)) from None
    workers = min(len(jobs), os.cpu_count() or 1)
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_sweep_worker, jobs))
        else:
            rows = [_sweep_worker(job) for job in jobs]
    except StepFailure as exc:
        raise CliError(EXIT_SOLVER, "solver", str(exc), step=exc.step_index) from None

    keys = ["duality_functional", "mass_u_final", "max_v_final"]
    if all("error" in r for r in rows):
        keys.append("error")
    for key in keys:
        prev = None
        for r in rows:
            r[f"{key}_ratio"] = (prev / r[key] if r[key] != 0 else math.nan) if prev is not None else math.nan
            prev = r[key]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = ["level", "axis", "N", "n"] + [c for k in keys for c in (k, f"{k}_ratio")]
    path = out / f"sweep_{args.axis}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for lv, r in zip(levels, rows):
            w.writerow([repr(lv), args.axis, r["N"], r["n"]] + [repr(float(r[c])) for c in header[4:]])
    print(path.read_text(), end="")
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossdiff", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=f"crossdiff {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check admissibility and report the regime")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a simulation with online monitors")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides random initial-data seeds")
    p.add_argument("--monitors", default=None, help="comma list of monitors to enable")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="refinement sweep over one axis")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--axis", choices=("tau", "h", "d_beta"), default="tau")
    p.add_argument("--levels", required=True, help="comma list of axis values")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="recompute monitors from stored snapshots")
    p.add_argument("--out", required=True, help="run directory written by 'run'")
    p.add_argument("--config", default=None, help="diagnostics config (default: the run's config)")
    p.add_argument("--monitors", default=None)
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
