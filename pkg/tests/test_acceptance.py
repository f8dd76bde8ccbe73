"""Acceptance criteria, one test each, printed as PASS/FAIL lines in the terminal summary."""

import json
import math
import time

import numpy as np
import pytest

from hmhf.analysis import (
    convergence_rate_check,
    energy_gap_inequality,
    gradient_estimate_ratio,
    hardy_check,
    kinetic_decay_check,
)
from hmhf.disk import DiskGrid
from hmhf.flow import dissipation_residual, run, solve_harmonic
from hmhf.geometry import CliffordTorus, TorusOfRevolution, UnitSphere, stereographic_reference
from hmhf.scenario import Scenario, bundled_configs, perturbed_cap

from conftest import ACCEPTANCE, SPHERE, TIMINGS

pytestmark = pytest.mark.slow


def record(n, ok, msg):
    ACCEPTANCE.append((n, bool(ok), msg))
    assert ok, f"criterion {n}: {msg}"


def test_criterion_01_hardy_constant():
    start = time.perf_counter()
    rep = hardy_check(DiskGrid(256, 64), np.random.default_rng(20240917), 50, 0.05)
    wall = time.perf_counter() - start
    ratios = rep.extra["ratios"]
    ok = ratios.max() <= 4.05 and abs(ratios[0] - 1.0) <= 0.02 and wall < 5.0
    record(1, ok, f"max Hardy ratio {ratios.max():.4f} <= 4.05, ratio(1-r) = {ratios[0]:.4f}, {wall:.2f} s")


def test_criterion_02_dissipation_identity(cap64, cap64_short_half_dt):
    _, _, coarse = cap64
    _, _, fine = cap64_short_half_dt
    r1 = dissipation_residual(coarse, 0.1, 1.0)
    r2 = dissipation_residual(fine, 0.1, 1.0)
    drop = coarse.energy[coarse.index_of(0.1)] - coarse.energy[coarse.index_of(1.0)]
    wall = TIMINGS["cap64"] + TIMINGS["cap64_short_half_dt"]
    ok = r1 <= 0.05 * drop and r1 / r2 >= 1.5 and wall < 60
    record(2, ok, f"residual/drop {r1 / drop:.3e} <= 0.05, halving ratio {r1 / r2:.2f} >= 1.5, {wall:.1f} s")


def test_criterion_03_energy_monotonicity():
    worst = []
    for path in bundled_configs():
        traj = run(Scenario.from_file(path))
        excess = np.diff(traj.energy) - 10 * traj.dt * traj.kinetic[:-1]
        worst.append((path.stem, float(excess.max()) if len(excess) else 0.0))
    ok = all(w <= 0 for _, w in worst)
    detail = ", ".join(f"{name} {w:.2e}" for name, w in worst)
    record(3, ok, f"max E_k+1 - E_k - 10 dt K_k over shipped scenarios: {detail}")


def test_criterion_04_energy_gap(cap64):
    _, _, traj = cap64
    rep = energy_gap_inequality(traj)
    bound = -1e-6 * traj.energy[0]
    record(
        4,
        rep.min_slack >= bound,
        f"min slack {rep.min_slack:.3e} >= {bound:.3e} over {rep.constants['n_pairs']} pairs "
        f"({len(traj.snapshots)} snapshots), max gap/drop {rep.constants['max_gap_over_drop']:.3f}",
    )


def test_criterion_05_exponential_convergence(cap64, cap128, limit64):
    g128, u128, traj128 = cap128
    limit128 = solve_harmonic(g128, SPHERE, u128, 1e-24)
    a = convergence_rate_check(cap64[2], limit64)
    b = convergence_rate_check(traj128, limit128)
    change = abs(b.fit.alpha - a.fit.alpha) / a.fit.alpha
    ok = (
        min(a.fit.goodness, b.fit.goodness) >= 0.98
        and min(a.fit.alpha, b.fit.alpha) > 0
        and change <= 0.15
    )
    record(
        5,
        ok,
        f"alpha0 {a.fit.alpha:.4f} (n_r=64) vs {b.fit.alpha:.4f} (n_r=128), change {change:.2%}, "
        f"goodness {a.fit.goodness:.5f}/{b.fit.goodness:.5f}",
    )


def test_criterion_06_kinetic_decay(cap64):
    _, _, traj = cap64
    rep = kinetic_decay_check(traj)
    bound = -1e-8 * traj.kinetic[0]
    alpha = rep.fit.alpha if rep.fit else math.nan
    ok = rep.min_slack >= bound and alpha > 0
    record(6, ok, f"min slack {rep.min_slack:.3e} >= {bound:.3e} over {len(rep.slacks)} steps, alpha1 {alpha:.3f}")


def test_criterion_07_gradient_estimate(cap32, cap64):
    c32 = gradient_estimate_ratio(cap32[2]).constants["C1_measured"]
    c64 = gradient_estimate_ratio(cap64[2]).constants["C1_measured"]
    change = abs(c64 - c32) / c32
    ok = math.isfinite(c32) and math.isfinite(c64) and change <= 0.2
    record(7, ok, f"C1 {c32:.4f} (n_r=32) vs {c64:.4f} (n_r=64), change {change:.2%}")


def test_criterion_08_stability(toyscale):
    out, _, _ = toyscale
    rep = json.loads((out / "reports" / "stability.json").read_text())
    series = {s["delta"]: s for s in rep["extra"]["series"]}
    sup = dict(zip(rep["constants"]["deltas"], rep["constants"]["sup_distance"]))
    zero = series[0.0]["distance"]
    horizon = series[1e-3]["times"][-1]
    ratios = [sup[1e-2] / sup[1e-3] / 10, sup[1e-3] / sup[1e-4] / 10]
    ok = (
        all(d == 0.0 for d in zero)
        and horizon >= 1.0 - 1e-9
        and sup[1e-3] <= 10 * 1e-3
        and all(abs(r - 1) <= 0.1 for r in ratios)
    )
    record(
        8,
        ok,
        f"delta=0 series identically 0 ({len(zero)} steps), sup L2 at 1e-3 = {sup[1e-3]:.3e} <= 1e-2, "
        f"response ratios {ratios[0]:.4f}, {ratios[1]:.4f}",
    )


def test_criterion_09_harmonic_uniqueness(cap64, limit64):
    grid, _, _ = cap64
    ref = grid.evaluate(stereographic_reference(0.3))
    other = solve_harmonic(grid, SPHERE, perturbed_cap(grid, 0.3, -0.08, 0.2), 1e-24)
    bound = 10 * grid.dr**2
    d12 = grid.h1_distance(limit64, other)
    d1r = grid.h1_distance(limit64, ref)
    d2r = grid.h1_distance(other, ref)
    ok = max(d12, d1r, d2r) <= bound
    record(9, ok, f"H1 distances {d12:.2e} (limits), {d1r:.2e}, {d2r:.2e} (to reference) <= {bound:.2e}")


def test_criterion_10_geometry():
    rng = np.random.default_rng(20240917)
    s = UnitSphere()
    x, y = s.sample(rng, 10_000), s.sample(rng, 10_000)
    pr = s.perp_ratio(x, y)
    perp_err = float(np.abs(pr - 0.5).max())
    worst = {}
    for m, n in ((s, 10_000), (CliffordTorus(), 10_000), (TorusOfRevolution(), 2_000)):
        a = m.sample(rng, n)
        b = m.project(a + 0.2 * m.reach_estimate * rng.standard_normal(a.shape))
        sets = [(a, b)]
        if not isinstance(m, TorusOfRevolution):
            # closed-form distances also cover far-apart pairs cheaply
            sets.append((a, m.sample(rng, n)))
        for p, q in sets:
            chord = np.linalg.norm(p - q, axis=-1)
            keep = chord > 1e-12
            ratio = np.asarray(m.intrinsic_distance(p[keep], q[keep])) / chord[keep]
            worst[m.kind] = max(worst.get(m.kind, 0.0), float(ratio.max()))
    ok = perp_err <= 1e-12 and all(w <= 2 for w in worst.values())
    detail = ", ".join(f"{k} {v:.4f}" for k, v in worst.items())
    record(10, ok, f"sphere |perp_ratio - 0.5| max {perp_err:.1e}; max dist/chord: {detail}")


def test_criterion_11_stationarity(reference_run):
    grid, _, traj = reference_run
    c = 0.25
    bound = c * grid.dr**4
    Kmax = float(traj.kinetic.max())
    record(11, Kmax <= bound, f"max K {Kmax:.3e} <= {c} dr^4 = {bound:.3e} over {len(traj.kinetic)} steps")
