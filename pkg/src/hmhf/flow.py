"""Time integration of the harmonic map heat flow with a fixed boundary trace.

Each step is an ambient parabolic update followed by node-wise nearest-point
projection onto the target.  The boundary row of every field is the trace and
is copied, never recomputed, so it stays bit-for-bit equal to the initial data.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .disk import DiskGrid, ImplicitHeatSolver
from .errors import (
    EnergyAboveThreshold,
    HMHFError,
    NonmonotoneEnergy,
    NotConverged,
    StabilityViolation,
    UnsampledTime,
)
from .geometry import TargetManifold

CONSTRAINT_TOL = 1e-9
# slack added to the per-step energy tolerance to absorb summation round-off
ROUNDOFF_REL = 64 * np.finfo(float).eps


class Scheme(str, enum.Enum):
    EXPLICIT = "explicit"
    SEMI_IMPLICIT = "semi_implicit"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "explicitprojection": cls.EXPLICIT,
            "semiimplicitprojection": cls.SEMI_IMPLICIT,
            "semi_implicit_projection": cls.SEMI_IMPLICIT,
            "explicit_projection": cls.EXPLICIT,
        }
        if key in aliases:
            return aliases[key]
        return cls(key)


ExplicitProjection = Scheme.EXPLICIT
SemiImplicitProjection = Scheme.SEMI_IMPLICIT


def max_stable_dt(grid: DiskGrid, scheme) -> float:
    """Largest time step the scheme's stability rule admits on ``grid``."""
    scheme = Scheme.parse(scheme)
    if scheme is Scheme.EXPLICIT:
        return 0.2 * grid.h_min**2
    return 0.5 * grid.dr


def check_stability(grid: DiskGrid, scheme, dt: float) -> None:
    if not (dt > 0 and math.isfinite(dt)):
        raise StabilityViolation(f"dt must be a positive finite number, got {dt!r}")
    limit = max_stable_dt(grid, scheme)
    if dt > limit * (1 + 1e-12):
        raise StabilityViolation(
            f"dt={dt:g} exceeds the {Scheme.parse(scheme).value} limit {limit:.4g} on {grid}"
        )


@dataclass(frozen=True)
class FlowState:
    """Field at time ``t`` and the field one step earlier."""

    t: float
    u: np.ndarray
    u_prev: np.ndarray
    dt: float
    step: int = 0

    @property
    def velocity(self) -> np.ndarray:
        """Backward difference quotient ``(u - u_prev) / dt``."""
        return (self.u - self.u_prev) / self.dt

    @property
    def trace(self) -> np.ndarray:
        return self.u[-1]


def tension_normal(grid: DiskGrid, target: TargetManifold, u) -> np.ndarray:
    """``A_u(grad u, grad u)`` on interior rows.

    Centred derivatives are first projected onto the tangent space so that the
    second fundamental form sees admissible arguments.
    """
    n = grid.n_r
    ui = u[:n]
    ur = target.tangent_project(ui, grid.d_r(u))
    ut = target.tangent_project(ui, grid.d_theta(ui) / grid.r[:, None, None])
    return target._sff(ui, ur, ur) + target._sff(ui, ut, ut)


class Flow:
    """Stepper for one grid, target, scheme and time step."""

    def __init__(self, grid: DiskGrid, target: TargetManifold, scheme=Scheme.SEMI_IMPLICIT, dt: float = 1e-3):
        self.grid = grid
        self.target = target
        self.scheme = Scheme.parse(scheme)
        self.dt = float(dt)
        check_stability(grid, self.scheme, self.dt)
        self._solver: ImplicitHeatSolver | None = (
            grid.heat_solver(self.dt) if self.scheme is Scheme.SEMI_IMPLICIT else None
        )

    # -- single steps -----------------------------------------------------------
    def initial_state(self, u0) -> FlowState:
        u0 = self.grid.check(u0)
        if u0.ndim != 3 or u0.shape[2] != self.target.ambient_dim:
            raise ValueError(
                f"initial field must have shape {self.grid.shape + (self.target.ambient_dim,)}, got {u0.shape}"
            )
        u0 = np.array(u0, dtype=float)
        res = float(np.max(self.target.constraint_residual(u0)))
        if res > CONSTRAINT_TOL:
            raise ValueError(f"initial field is off the target (residual {res:.2e})")
        return FlowState(0.0, u0, u0.copy(), self.dt, 0)

    def ambient_update(self, u) -> np.ndarray:
        """Interior rows of the pre-projection field ``u*``."""
        n = self.grid.n_r
        A = tension_normal(self.grid, self.target, u)
        if self.scheme is Scheme.EXPLICIT:
            lap = self.grid.laplacian(u)[:n]
            return u[:n] + self.dt * (lap - A)
        return self._solver.solve(u[:n] - self.dt * A, u[n])

    def step(self, state: FlowState) -> FlowState:
        n = self.grid.n_r
        u = state.u
        interior = self.target.project(self.ambient_update(u))
        new = np.empty_like(u)
        new[:n] = interior
        new[n] = u[n]
        k = state.step + 1
        return FlowState(k * self.dt, new, u, self.dt, k)

    def iterate(self, u0):
        """Yield the initial state followed by every subsequent step (endless)."""
        state = self.initial_state(u0)
        yield state
        while True:
            state = self.step(state)
            yield state

    # -- diagnostics ------------------------------------------------------------
    def kinetic(self, state: FlowState) -> float:
        """``int |u_t|^2`` with the difference quotient; at ``t = 0`` the tangential tension."""
        if state.step == 0:
            v = self.initial_velocity(state.u)
        else:
            v = state.velocity
        return self.grid.l2_norm(v) ** 2

    def initial_velocity(self, u) -> np.ndarray:
        n = self.grid.n_r
        lap = self.grid.laplacian(u)
        v = np.zeros_like(u)
        v[:n] = self.target.tangent_project(u[:n], lap[:n])
        return v

    def energy(self, u) -> float:
        return self.grid.energy(u)

    def constraint_residual(self, u) -> float:
        return float(np.max(self.target.constraint_residual(u)))


def step(state: FlowState, scheme, grid: DiskGrid, target: TargetManifold) -> FlowState:
    """One step of ``scheme`` with the time step carried by ``state``."""
    return Flow(grid, target, scheme, state.dt).step(state)


# -- trajectories ---------------------------------------------------------------------


@dataclass
class Trajectory:
    """Sampled diagnostics of one run.

    ``times``, ``energy``, ``kinetic``, ``dissipation`` and ``residual`` hold one
    entry per step (``times[k] = k dt``).  ``snapshots`` maps scheduled sample
    times to fields; ``dense`` holds extra in-memory samples for rate fitting.
    """

    grid: DiskGrid
    target: TargetManifold
    scheme: Scheme
    dt: float
    times: np.ndarray
    energy: np.ndarray
    kinetic: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray
    snapshot_times: list[float] = field(default_factory=list)
    snapshots: list[np.ndarray] = field(default_factory=list)
    dense_times: list[float] = field(default_factory=list)
    dense: list[np.ndarray] = field(default_factory=list)
    termination: str = "horizon"
    final: FlowState | None = None
    energy_tolerance: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k >= len(self.times) or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise UnsampledTime(f"t={t!r} is not a sampled time of this trajectory")
        return k

    def snapshot(self, t: float) -> np.ndarray:
        for s, u in zip(self.snapshot_times, self.snapshots):
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return u
        raise UnsampledTime(f"no snapshot stored at t={t!r}")

    def all_samples(self):
        """Scheduled and dense samples merged, sorted by time (duplicates dropped)."""
        pairs = {}
        for t, u in zip(self.dense_times, self.dense):
            pairs[t] = u
        for t, u in zip(self.snapshot_times, self.snapshots):
            pairs[t] = u
        ts = sorted(pairs)
        return ts, [pairs[t] for t in ts]

    @property
    def final_field(self) -> np.ndarray:
        return self.final.u

    @property
    def metadata(self) -> dict:
        return {
            "scheme": self.scheme.value,
            "dt": self.dt,
            "grid": {"n_r": self.grid.n_r, "n_theta": self.grid.n_theta},
            "target": self.target.to_config(),
            "steps": len(self.times) - 1,
            "termination": self.termination,
        }


def _schedule_steps(times, dt: float, n_max: int) -> set[int]:
    out = set()
    for t in times:
        k = int(round(float(t) / dt))
        if 0 <= k <= n_max:
            out.add(k)
    return out


def simulate(
    grid: DiskGrid,
    target: TargetManifold,
    u0,
    *,
    scheme=Scheme.SEMI_IMPLICIT,
    dt: float = 1e-3,
    horizon: float = 1.0,
    stationarity_tol: float = 0.0,
    snapshot_times=(),
    dense_times=(),
    energy_factor: float = 10.0,
    check_energy: bool = True,
) -> Trajectory:
    """Run the flow from ``u0`` until ``horizon`` or until ``K < stationarity_tol``.

    Snapshots are taken at the steps nearest to the requested times; ``t = 0``
    and the final step are always stored.  The energy test at each step is
    ``E_{k+1} <= E_k + energy_factor * dt * K_k`` (plus a round-off floor).
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    flow = Flow(grid, target, scheme, dt)
    n_steps = int(math.floor(horizon / dt + 1e-9))
    snap_steps = _schedule_steps(snapshot_times, dt, n_steps) | {0}
    dense_steps = _schedule_steps(dense_times, dt, n_steps)
    # energy carried by unit-round-off noise on the finest cell
    noise_floor = math.pi * (np.finfo(float).eps / grid.h_min) ** 2

    times = [0.0]
    energy = []
    kinetic = []
    dissipation = [0.0]
    residual = []
    tol_list = [0.0]
    snaps_t, snaps = [], []
    dense_t, dense = [], []

    def build(termination, state):
        return Trajectory(
            grid=grid,
            target=target,
            scheme=flow.scheme,
            dt=flow.dt,
            times=np.array(times),
            energy=np.array(energy),
            kinetic=np.array(kinetic),
            dissipation=np.array(dissipation),
            residual=np.array(residual),
            snapshot_times=snaps_t,
            snapshots=snaps,
            dense_times=dense_t,
            dense=dense,
            termination=termination,
            final=state,
            energy_tolerance=np.array(tol_list),
        )

    state = flow.initial_state(u0)
    energy.append(flow.energy(state.u))
    kinetic.append(flow.kinetic(state))
    residual.append(flow.constraint_residual(state.u))
    snaps_t.append(0.0)
    snaps.append(state.u.copy())
    if 0 in dense_steps:
        dense_t.append(0.0)
        dense.append(state.u.copy())

    termination = "horizon"
    if stationarity_tol > 0 and kinetic[0] < stationarity_tol:
        termination = "converged"
        n_steps = 0

    for k in range(1, n_steps + 1):
        try:
            state = flow.step(state)
        except HMHFError as exc:
            exc.trajectory = build("failed", state)
            raise
        E = flow.energy(state.u)
        K = flow.kinetic(state)
        tol = energy_factor * dt * kinetic[-1] + ROUNDOFF_REL * abs(energy[-1]) + noise_floor
        times.append(k * dt)
        energy.append(E)
        kinetic.append(K)
        dissipation.append(dissipation[-1] + dt * K)
        residual.append(flow.constraint_residual(state.u))
        tol_list.append(tol)
        if k in dense_steps:
            dense_t.append(k * dt)
            dense.append(state.u.copy())
        converged = stationarity_tol > 0 and K < stationarity_tol
        if k in snap_steps or k == n_steps or converged:
            snaps_t.append(k * dt)
            snaps.append(state.u.copy())
        if check_energy and E > energy[-2] + tol:
            exc = NonmonotoneEnergy(
                f"energy rose by {E - energy[-2]:.3e} at t={k * dt:g} (tolerance {tol:.3e})"
            )
            exc.trajectory = build("nonmonotone_energy", state)
            raise exc
        if converged:
            termination = "converged"
            break
    return build(termination, state)


def run(scenario) -> Trajectory:
    """Run a validated scenario (any object providing ``simulate_kwargs()``)."""
    return simulate(**scenario.simulate_kwargs())


def dissipation_residual(traj: Trajectory, t1: float, t2: float) -> float:
    """``| int_{t1}^{t2} int |u_t|^2  -  (E(t1) - E(t2)) |``."""
    if not t1 < t2:
        raise ValueError("need t1 < t2")
    i = traj.index_of(t1)
    j = traj.index_of(t2)
    dissipated = traj.dissipation[j] - traj.dissipation[i]
    return float(abs(dissipated - (traj.energy[i] - traj.energy[j])))


def solve_harmonic(
    grid: DiskGrid,
    target: TargetManifold,
    initial,
    tol: float = 1e-24,
    *,
    boundary=None,
    dt: float | None = None,
    max_steps: int = 100_000,
    threshold: float | None = None,
) -> np.ndarray:
    """Long-time limit of the semi-implicit flow from ``initial``.

    ``boundary`` (if given) replaces the trace row of ``initial``.  Iterates
    until the kinetic energy drops below ``tol``.
    """
    u = np.array(grid.check(initial), dtype=float)
    if boundary is not None:
        u[grid.n_r] = np.asarray(boundary, dtype=float)
    if threshold is not None:
        E0 = grid.energy(u)
        if E0 > threshold:
            raise EnergyAboveThreshold(f"E(initial)={E0:.4g} exceeds the small-energy threshold {threshold:g}")
    if dt is None:
        dt = 0.5 * grid.dr
    flow = Flow(grid, target, Scheme.SEMI_IMPLICIT, dt)
    state = flow.initial_state(u)
    for _ in range(max_steps):
        state = flow.step(state)
        if flow.kinetic(state) < tol:
            return state.u
    raise NotConverged(f"kinetic energy still {flow.kinetic(state):.3e} after {max_steps} steps")
