"""Shared, session-scoped trajectories (the expensive runs are computed once)."""

import time

import numpy as np
import pytest

from hmhf.disk import DiskGrid
from hmhf.flow import simulate, solve_harmonic
from hmhf.geometry import UnitSphere, stereographic_reference
from hmhf.scenario import perturbed_cap

SPHERE = UnitSphere()

# wall time of each fixture build, keyed by fixture name
TIMINGS = {}
# one (criterion, passed, message) row per acceptance test, printed at the end
ACCEPTANCE = []


def timed(name, fn, *args, **kw):
    start = time.perf_counter()
    out = fn(*args, **kw)
    TIMINGS[name] = time.perf_counter() - start
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, msg in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {msg}")


def geometric_times(t0=0.01, horizon=5.0):
    out, k = [], 0
    while t0 * 2 ** (k / 2) <= horizon:
        out.append(t0 * 2 ** (k / 2))
        k += 1
    return out


def cap_run(n_r=64, n_theta=64, dt=1e-3, horizon=5.0, dense=0.05, tol=1e-12):
    grid = DiskGrid(n_r, n_theta)
    u0 = perturbed_cap(grid)
    traj = simulate(
        grid,
        SPHERE,
        u0,
        dt=dt,
        horizon=horizon,
        stationarity_tol=tol,
        snapshot_times=geometric_times(horizon=horizon),
        dense_times=np.arange(0.0, horizon + 1e-9, dense) if dense else (),
    )
    return grid, u0, traj


@pytest.fixture(scope="session")
def sphere():
    return SPHERE


@pytest.fixture(scope="session")
def cap64():
    """Perturbed cap (lambda 0.3, eps 0.05), n_r = 64, semi-implicit, dt = 1e-3, T = 5."""
    return timed("cap64", cap_run, 64)


@pytest.fixture(scope="session")
def cap32():
    return timed("cap32", cap_run, 32)


@pytest.fixture(scope="session")
def cap128():
    return timed("cap128", cap_run, 128)


@pytest.fixture(scope="session")
def cap64_short_half_dt():
    return timed("cap64_short_half_dt", cap_run, 64, dt=5e-4, horizon=1.0, dense=0, tol=0.0)


@pytest.fixture(scope="session")
def limit64(cap64):
    grid, u0, _ = cap64
    return timed("limit64", solve_harmonic, grid, SPHERE, u0, 1e-24)


@pytest.fixture(scope="session")
def reference_run():
    grid = DiskGrid(64, 64)
    u0 = grid.evaluate(stereographic_reference(0.3))
    traj = simulate(grid, SPHERE, u0, dt=1e-3, horizon=1.0, stationarity_tol=1e-12,
                    snapshot_times=geometric_times(horizon=1.0))
    return grid, u0, traj


@pytest.fixture(scope="session")
def toyscale(tmp_path_factory):
    """The bundled demo scenario run through the command line: (directory, exit code, seconds)."""
    from hmhf.cli import main

    root = tmp_path_factory.mktemp("toy")
    start = time.perf_counter()
    code = main(["run", "perturbed-cap.toyscale", "--output-root", str(root)])
    return root / "perturbed-cap.toyscale", code, time.perf_counter() - start
