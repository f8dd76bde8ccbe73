"""Markdown summaries of run directories."""

from __future__ import annotations

import json
from pathlib import Path

from .errors import MissingManifest

# inequality, stated constant, key of the measured constant in the report JSON
ROWS = {
    "hardy": ("int h^2/(1-|x|)^2 <= 4 int |grad h|^2", "4", "max_ratio"),
    "dissipation": ("int_t1^t2 int |u_t|^2 = E(t1) - E(t2)", "-", "relative_residual"),
    "energy_monotonicity": ("E(t_k+1) <= E(t_k) + 10 dt K(t_k)", "-", "max_increase"),
    "energy_gap": ("(1/7) int |grad(u2 - u1)|^2 <= E(t1) - E(t2)", "1/7", "max_gap_over_drop"),
    "gradient_estimate": ("|grad u|^2 <= C1 E [1/t + (1-|x|)^-2]", "C1 (measured)", "C1_measured"),
    "kinetic_decay": ("K(t0) <= (4/t0) int_0^t0 K", "4", "K0"),
    "convergence_rate": ("||u(t) - u_inf||_H1 <= C0 exp(-alpha0 t)", "alpha0 (measured)", "alpha0"),
    "h2_bound": ("int_0^T int_B1/4 |grad^2 u|^2 <= C sup E", "C (measured)", "C_measured"),
    "stability": ("sup_t ||u - v||_L2 <= 10 delta", "10", "sup_distance"),
}


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "yes" if x else "no"
    if isinstance(x, float):
        return f"{x:.4g}"
    if isinstance(x, list):
        return ", ".join(_fmt(v) for v in x)
    return str(x)


def _cell(text: str) -> str:
    return str(text).replace("|", "\\|")


def load_run(run_dir) -> tuple[dict, list]:
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise MissingManifest(f"{run_dir} has no manifest.json")
    manifest = json.loads(mpath.read_text())
    reports = []
    for p in sorted((run_dir / "reports").glob("*.json")):
        reports.append(json.loads(p.read_text()))
    order = {k: i for i, k in enumerate(ROWS)}
    reports.sort(key=lambda r: order.get(r["id"], len(order)))
    return manifest, reports


def _measured(rep: dict):
    key = ROWS.get(rep["id"], ("", "", None))[2]
    return rep.get("constants", {}).get(key, rep.get("min_slack"))


def summarize_run(run_dir) -> str:
    manifest, reports = load_run(run_dir)
    cfg = manifest.get("config", {})
    g = cfg.get("grid", {})
    f = cfg.get("flow", {})
    lines = [
        f"# Run `{Path(run_dir).name}`",
        "",
        "| field | value |",
        "|---|---|",
        f"| target | {cfg.get('target', {}).get('kind', '?')} |",
        f"| initial | {cfg.get('initial', {}).get('kind', '?')} |",
        f"| grid | n_r={g.get('n_r')}, n_theta={g.get('n_theta')} |",
        f"| scheme | {f.get('scheme')}, dt={f.get('dt')}, T={f.get('horizon')} |",
        f"| termination | {manifest.get('termination')} |",
        f"| final time | {_fmt(manifest.get('final_time'))} |",
        f"| seed | {manifest.get('seed')} |",
        f"| wall time (s) | {_fmt(manifest.get('wall_time'))} |",
    ]
    if manifest.get("error"):
        lines.append(f"| error | {manifest['error']} |")
    if reports:
        lines += [
            "",
            "Stated constants: Hardy constant **4**, energy-gap factor **1/7**.",
            "",
            "| check | inequality | constant | measured | min slack | tolerance | verdict |",
            "|---|---|---|---|---|---|---|",
        ]
        for rep in reports:
            ineq, const, _ = ROWS.get(rep["id"], (rep.get("description", ""), "-", None))
            verdict = "pass" if rep["passed"] else "FAIL"
            lines.append(
                f"| {rep['id']} | {_cell(ineq)} | {const} | {_fmt(_measured(rep))} | "
                f"{_fmt(rep['min_slack'])} | {_fmt(rep['tolerance'])} | {verdict} |"
            )
    return "\n".join(lines) + "\n"


def compare_runs(run_dirs) -> str:
    """Side-by-side table of measured constants and verdicts across runs."""
    runs = [(Path(d).name, *load_run(d)) for d in run_dirs]
    ids = []
    for _, _, reps in runs:
        for r in reps:
            if r["id"] not in ids:
                ids.append(r["id"])
    order = {k: i for i, k in enumerate(ROWS)}
    ids.sort(key=lambda k: order.get(k, len(order)))
    head = "| check | " + " | ".join(name for name, _, _ in runs) + " |"
    lines = ["# Comparison", "", head, "|---|" + "---|" * len(runs)]
    grid_row = ["grid"]
    term_row = ["termination"]
    for _, m, _ in runs:
        g = m.get("config", {}).get("grid", {})
        grid_row.append(f"{g.get('n_r')} x {g.get('n_theta')}")
        term_row.append(str(m.get("termination")))
    lines.append("| " + " | ".join(grid_row) + " |")
    lines.append("| " + " | ".join(term_row) + " |")
    for rid in ids:
        cells = [rid]
        for _, _, reps in runs:
            rep = next((r for r in reps if r["id"] == rid), None)
            if rep is None:
                cells.append("-")
            else:
                cells.append(f"{_fmt(_measured(rep))} ({'pass' if rep['passed'] else 'FAIL'})")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def report(run_dirs) -> str:
    if isinstance(run_dirs, (str, Path)):
        run_dirs = [run_dirs]
    run_dirs = list(run_dirs)
    if len(run_dirs) == 1:
        return summarize_run(run_dirs[0])
    parts = [summarize_run(d) for d in run_dirs]
    return compare_runs(run_dirs) + "\n" + "\n".join(parts)
