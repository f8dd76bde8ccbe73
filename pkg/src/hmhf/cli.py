"""Command-line front end: ``hmhf run | report | sweep | validate``.

The output root defaults to ``output.root`` of the config (relative to the
working directory) and is overridden by the ``HMHF_OUTPUT_ROOT`` environment
variable or ``--output-root``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis
from .disk import DiskGrid, save_field
from .errors import HMHFError, RunDirectoryExists, UnsampledTime
from .flow import Trajectory, run as run_flow, solve_harmonic
from .report import report as render_report
from .scenario import Scenario, bundled_config, load_config, set_dotted

OUTPUT_ENV = "HMHF_OUTPUT_ROOT"
CHECKS_FAILED = 2


def _versions() -> dict:
    return {
        "hmhf": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def output_dir(scenario: Scenario, output_root=None) -> Path:
    root = output_root or os.environ.get(OUTPUT_ENV) or scenario.config["output"]["root"]
    return Path(root) / scenario.config["output"]["name"]


def write_diagnostics(path: Path, traj: Trajectory) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "E", "K", "D", "max_residual"])
        for row in zip(traj.times, traj.energy, traj.kinetic, traj.dissipation, traj.residual):
            w.writerow([repr(float(v)) for v in row])


def write_snapshots(directory: Path, traj: Trajectory) -> list:
    directory.mkdir()
    names = []
    for k, (t, u) in enumerate(zip(traj.snapshot_times, traj.snapshots)):
        name = f"u_{k:03d}_t{t:.6f}.csv"
        save_field(directory / name, traj.grid, u)
        names.append({"t": t, "file": name})
    return names


def _clip_window(traj: Trajectory, t1: float, t2: float):
    """Largest sampled sub-window of ``[t1, t2]`` (runs may stop early on convergence)."""
    dt = traj.dt
    a = min(int(round(t1 / dt)), len(traj.times) - 1)
    b = min(int(round(t2 / dt)), len(traj.times) - 1)
    if a >= b:
        raise UnsampledTime(f"window [{t1}, {t2}] is not covered by the run (final t={traj.times[-1]:g})")
    return float(traj.times[a]), float(traj.times[b])


def run_checks(scenario: Scenario, traj: Trajectory, rng: np.random.Generator) -> list:
    """Evaluate every requested check; returns :class:`InequalityReport` objects."""
    opt = scenario.option
    reports = []
    for name in scenario.checks:
        if name == "hardy":
            grid = DiskGrid(int(opt("hardy_n_r")), int(opt("hardy_n_theta")))
            rep = analysis.hardy_check(grid, rng, int(opt("hardy_functions")), float(opt("hardy_tol")))
        elif name == "dissipation":
            t1, t2 = _clip_window(traj, *opt("dissipation_window"))
            rep = analysis.dissipation_check(traj, t1, t2, float(opt("dissipation_rel_tol")))
        elif name == "energy_monotonicity":
            rep = analysis.energy_monotonicity_check(traj)
        elif name == "energy_gap":
            rep = analysis.energy_gap_inequality(traj, float(opt("gap_rel_tol")))
        elif name == "gradient_estimate":
            rep = analysis.gradient_estimate_ratio(traj, float(opt("gradient_cap")))
        elif name == "kinetic_decay":
            rep = analysis.kinetic_decay_check(traj, float(opt("kinetic_rel_tol")), float(opt("tail_start_fraction")))
        elif name == "convergence_rate":
            limit = solve_harmonic(
                traj.grid,
                traj.target,
                scenario.u0,
                float(opt("limit_tol")),
                threshold=float(scenario.config["flow"]["energy_threshold"]),
            )
            rep = analysis.convergence_rate_check(
                traj, limit, float(opt("convergence_min_goodness")), float(opt("tail_start_fraction"))
            )
        elif name == "h2_bound":
            rep = analysis.h2_bound_check(traj, cap=float(opt("h2_cap")))
        elif name == "stability":
            seed = int(rng.integers(2**31))
            results = [
                analysis.stability_experiment(scenario, float(d), seed, float(opt("stability_horizon")))
                for d in opt("stability_deltas")
            ]
            rep = analysis.stability_check(results, float(opt("stability_factor")), float(opt("stability_linear_tol")))
            rep.extra = {
                "perturbation_seed": seed,
                "series": [{"delta": r.delta, "times": r.times, "distance": r.distance} for r in results],
            }
        else:  # pragma: no cover - names are validated with the scenario
            raise ValueError(name)
        reports.append(rep)
    return reports


def execute(scenario: Scenario, output_root=None) -> tuple[Path, int]:
    """Run a scenario into a fresh directory; returns ``(directory, exit_code)``."""
    out = output_dir(scenario, output_root)
    if out.exists():
        raise RunDirectoryExists(f"{out} already exists; run directories are never overwritten")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.mkdir()
    manifest = {
        "config": scenario.to_dict(),
        "seed": scenario.seed,
        "versions": _versions(),
        "checks": {},
    }
    start = time.perf_counter()
    rng = np.random.default_rng(scenario.seed)
    traj = None
    code = 0
    try:
        traj = run_flow(scenario)
        manifest["termination"] = traj.termination
        reports = run_checks(scenario, traj, rng)
        (out / "reports").mkdir()
        for rep in reports:
            (out / "reports" / f"{rep.id}.json").write_text(rep.to_json(indent=1))
            manifest["checks"][rep.id] = rep.passed
        code = 0 if all(manifest["checks"].values()) else CHECKS_FAILED
    except HMHFError as exc:
        traj = getattr(exc, "trajectory", traj)
        manifest["termination"] = traj.termination if traj is not None and traj.termination != "horizon" else "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = exc.exit_code
    if traj is not None:
        write_diagnostics(out / "diagnostics.csv", traj)
        manifest["snapshots"] = write_snapshots(out / "snapshots", traj)
        manifest["final_time"] = float(traj.times[-1])
        manifest["steps"] = int(len(traj.times) - 1)
    manifest["wall_time"] = time.perf_counter() - start
    manifest["exit_code"] = code
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return out, code


def _resolve_config(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_config(arg)
    except FileNotFoundError:
        return p


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_run(args) -> int:
    scenario = Scenario.from_file(_resolve_config(args.config))
    out, code = execute(scenario, args.output_root)
    print(out)
    if args.report:
        print(render_report(out))
    return code


def cmd_report(args) -> int:
    print(render_report(args.dirs), end="")
    return 0


def cmd_validate(args) -> int:
    scenario = Scenario.from_file(_resolve_config(args.config))
    scenario.check_energy()
    print(json.dumps(scenario.to_dict(), indent=1))
    print(f"valid: E(u0) = {scenario.initial_energy:.6g}")
    return 0


def cmd_sweep(args) -> int:
    path = _resolve_config(args.config)
    base = load_config(path)
    key, _, values = args.vary.partition("=")
    if not values:
        raise SystemExit("--vary expects key=v1,v2,...")
    name = base.get("output", {}).get("name", "run")
    dirs, worst = [], 0
    for raw in values.split(","):
        cfg = json.loads(json.dumps(base))
        set_dotted(cfg, key, _parse_value(raw))
        set_dotted(cfg, "output.name", f"{name}-{key.replace('.', '_')}-{raw}")
        scenario = Scenario.from_dict(cfg, path.parent)
        out, code = execute(scenario, args.output_root)
        dirs.append(out)
        worst = worst or code
    print(render_report(dirs), end="")
    return worst


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hmhf", description="Harmonic map heat flow laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario into a fresh directory")
    r.add_argument("config", help="TOML file or bundled config name")
    r.add_argument("--output-root", default=None)
    r.add_argument("--report", action="store_true", help="print the Markdown summary afterwards")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="Markdown summary of one or more run directories")
    rep.add_argument("dirs", nargs="+")
    rep.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", help="run a config once per value of one key")
    s.add_argument("config")
    s.add_argument("--vary", required=True, help="dotted key and values, e.g. grid.n_r=32,64")
    s.add_argument("--output-root", default=None)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("validate", help="parse and validate a config")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HMHFError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
