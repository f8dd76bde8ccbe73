"""Post-processing checks on computed trajectories.

Every check returns an :class:`InequalityReport` whose slacks are arranged so
that a non-negative slack means the inequality holds at that sample.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .disk import DiskGrid
from .errors import EmptyTrajectory, NonPositiveValue, TooFewSamples, TooFewSnapshots
from .flow import Flow, Trajectory, dissipation_residual

HARDY_CONSTANT = 4.0
GAP_CONSTANT = 1.0 / 7.0


def _py(x):
    """Make ``x`` JSON friendly (numpy scalars, arrays, non-finite floats)."""
    if isinstance(x, dict):
        return {str(k): _py(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_py(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_py(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class RateFit:
    """``value ~ C exp(-alpha t)`` on ``window``; ``goodness`` is the R^2 of the log fit."""

    C: float
    alpha: float
    window: tuple[float, float]
    goodness: float
    n_samples: int = 0

    def to_dict(self) -> dict:
        return _py(asdict(self))


@dataclass
class InequalityReport:
    id: str
    description: str
    tolerance: float
    slacks: np.ndarray
    worst: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    fit: RateFit | None = None
    extra: dict = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        if len(self.slacks) == 0:
            return 0.0
        return float(np.min(self.slacks))

    @property
    def passed(self) -> bool:
        s = np.asarray(self.slacks, dtype=float)
        return bool(np.all(np.isfinite(s)) and self.min_slack >= -self.tolerance)

    def to_dict(self) -> dict:
        return _py(
            {
                "id": self.id,
                "description": self.description,
                "tolerance": self.tolerance,
                "min_slack": self.min_slack,
                "worst": self.worst,
                "constants": self.constants,
                "passed": self.passed,
                "fit": self.fit.to_dict() if self.fit else None,
                "n_samples": int(len(self.slacks)),
                "slacks": np.asarray(self.slacks, dtype=float),
                "extra": self.extra,
            }
        )

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _require(traj: Trajectory) -> None:
    if traj is None or len(traj.times) == 0:
        raise EmptyTrajectory("trajectory holds no samples")


# -- fitting -------------------------------------------------------------------------


def fit_exponential(series, window=None, min_samples: int = 10) -> RateFit:
    """Least-squares line through ``(t, log value)``.

    ``series`` is either a sequence of ``(t, value)`` pairs or a pair of arrays.
    """
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        t, v = (np.asarray(a, dtype=float) for a in series)
    else:
        arr = np.asarray(series, dtype=float).reshape(-1, 2)
        t, v = arr[:, 0], arr[:, 1]
    if window is not None:
        lo, hi = window
        keep = (t >= lo) & (t <= hi)
        t, v = t[keep], v[keep]
    if len(t) < min_samples:
        raise TooFewSamples(f"{len(t)} samples in window, need {min_samples}")
    if np.any(~(v > 0)):
        raise NonPositiveValue("exponential fit needs strictly positive values")
    y = np.log(v)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    goodness = 1.0 if ss_tot == 0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return RateFit(
        C=float(np.exp(intercept)),
        alpha=float(-slope),
        window=(float(t[0]), float(t[-1])),
        goodness=goodness,
        n_samples=int(len(t)),
    )


def tail_window(t, values, start_fraction: float = 0.3, floor: float = 0.0):
    """Window from ``start_fraction`` of the final time to the last sample above ``floor``."""
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    above = np.nonzero(values > floor)[0]
    if len(above) == 0:
        return (float(t[-1]), float(t[-1]))
    t_end = float(t[above[-1]])
    return (start_fraction * t_end, t_end)


# -- inequality checks ---------------------------------------------------------------


def gradient_estimate_ratio(traj: Trajectory, cap: float = 10.0) -> InequalityReport:
    """``sup |grad u|^2 / (E [1/t + (1 - |x|)^-2])`` over sampled ``t > 0`` and interior nodes."""
    _require(traj)
    grid = traj.grid
    ts, us = traj.all_samples()
    pairs = [(t, u) for t, u in zip(ts, us) if t > 0]
    if not pairs:
        raise EmptyTrajectory("no samples with t > 0")
    E = float(np.max(traj.energy))
    n = grid.n_r
    dist = (1.0 - grid.r)[:, None]
    best, where = 0.0, {"t": pairs[0][0], "r": float(grid.r[0]), "theta": 0.0}
    per_time = []
    for t, u in pairs:
        g = grid.gradient_sq(u)[:n]
        denom = E * (1.0 / t + dist**-2)
        ratio = np.where(denom > 0, g / np.where(denom > 0, denom, 1.0), 0.0)
        i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        per_time.append(float(ratio[i, j]))
        if ratio[i, j] > best:
            best = float(ratio[i, j])
            where = {"t": t, "r": float(grid.r[i]), "theta": float(grid.theta[j])}
    return InequalityReport(
        id="gradient_estimate",
        description="|grad u|^2(t,x) <= C1 E [1/t + (1-|x|)^-2]",
        tolerance=0.0,
        slacks=np.array([cap - best]),
        worst=where,
        constants={"C1_measured": best, "C_cap": cap, "sup_energy": E},
        extra={"times": [t for t, _ in pairs], "sup_ratio_per_time": per_time},
    )


def kinetic_decay_check(
    traj: Trajectory, rel_tol: float = 1e-8, start_fraction: float = 0.3
) -> InequalityReport:
    """``K(t0) <= (4 / t0) int_0^t0 K`` at every step, plus an exponential fit of the tail of ``K``."""
    _require(traj)
    t = traj.times[1:]
    if len(t) == 0:
        raise EmptyTrajectory("trajectory has no steps beyond t = 0")
    K = traj.kinetic[1:]
    integral = traj.dissipation[1:]
    slack = (4.0 / t) * integral - K
    k0 = float(traj.kinetic[0])
    tol = rel_tol * k0
    worst = int(np.argmin(slack))
    fit = None
    floor = 0.0
    win = tail_window(t, K, start_fraction, floor)
    try:
        fit = fit_exponential((t, K), win)
    except (TooFewSamples, NonPositiveValue):
        fit = None
    return InequalityReport(
        id="kinetic_decay",
        description="K(t0) <= (4/t0) int_0^t0 K dt, tail K ~ C3 exp(-alpha1 t)",
        tolerance=tol,
        slacks=slack,
        worst={"t": float(t[worst]), "slack": float(slack[worst])},
        constants={"factor": 4.0, "K0": k0},
        fit=fit,
    )


def gap_pairs(traj: Trajectory):
    """All ``(t1, t2, E1 - E2, int |grad(u2 - u1)|^2)`` over snapshot pairs ``t1 <= t2``.

    Pairs include the diagonal ``t1 = t2``.
    """
    grid = traj.grid
    ts = list(traj.snapshot_times)
    us = traj.snapshots
    Es = [grid.energy(u) for u in us]
    out = []
    for a in range(len(ts)):
        for b in range(a, len(ts)):
            w = us[b] - us[a]
            out.append((ts[a], ts[b], Es[a] - Es[b], 2.0 * grid.energy(w)))
    return out


def energy_gap_inequality(traj: Trajectory, rel_tol: float = 1e-6) -> InequalityReport:
    """``(1/7) int |grad u(t2) - grad u(t1)|^2 <= E(t1) - E(t2)`` on snapshot pairs.

    The companion form with ``int |grad u(t1)|^2 - int |grad u(t2)|^2 = 2 (E1 - E2)``
    on the right is weaker; its minimum slack is reported under ``constants``.
    """
    _require(traj)
    if len(traj.snapshots) < 2:
        raise TooFewSnapshots(f"{len(traj.snapshots)} snapshot(s), need at least 2")
    rows = gap_pairs(traj)
    slack = np.array([drop - GAP_CONSTANT * gap for _, _, drop, gap in rows])
    weak = np.array([2.0 * drop - GAP_CONSTANT * gap for _, _, drop, gap in rows])
    best_ratio = max((gap / drop for _, _, drop, gap in rows if drop > 0), default=0.0)
    w = int(np.argmin(slack))
    E0 = float(traj.energy[0])
    return InequalityReport(
        id="energy_gap",
        description="(1/7) int |grad u(t2) - grad u(t1)|^2 <= E(t1) - E(t2)",
        tolerance=rel_tol * E0,
        slacks=slack,
        worst={"t1": rows[w][0], "t2": rows[w][1], "slack": float(slack[w])},
        constants={
            "gap_constant": GAP_CONSTANT,
            "E0": E0,
            "min_slack_dirichlet_form": float(np.min(weak)),
            "max_gap_over_drop": float(best_ratio),
            "n_pairs": len(rows),
        },
    )


def h2_bound_check(traj: Trajectory, radius: float = 0.25, cap: float = 1e6) -> InequalityReport:
    """Measured ``C = int_0^T int_{|x| <= radius} |grad^2 u|^2 / sup_t E``.

    Only finiteness is asserted (``C <= cap``); refinement stability is checked by
    comparing reports across grids.
    """
    _require(traj)
    ts, us = traj.all_samples()
    if len(ts) < 10:
        raise TooFewSnapshots(f"{len(ts)} snapshot(s), need at least 10 for the time quadrature")
    grid = traj.grid
    rows = grid.r <= radius
    w = grid.weights[: grid.n_r][rows]
    inner = np.array([float(np.sum(w * grid.hessian_sq(u)[rows])) for u in us])
    ts = np.asarray(ts)
    numerator = float(np.sum(0.5 * (inner[1:] + inner[:-1]) * np.diff(ts)))
    E = float(np.max(traj.energy))
    ratio = 0.0 if numerator == 0.0 and E == 0.0 else numerator / E
    return InequalityReport(
        id="h2_bound",
        description="int_0^T int_{B_1/4} |grad^2 u|^2 <= C sup_t E",
        tolerance=0.0,
        slacks=np.array([cap - ratio]),
        worst={"t": float(ts[int(np.argmax(inner))])},
        constants={"C_measured": ratio, "C_cap": cap, "radius": radius, "sup_energy": E},
    )


def dissipation_check(traj: Trajectory, t1: float, t2: float, rel_tol: float = 0.05) -> InequalityReport:
    """Dissipation identity residual relative to the energy drop over ``[t1, t2]``."""
    _require(traj)
    res = dissipation_residual(traj, t1, t2)
    drop = float(traj.energy[traj.index_of(t1)] - traj.energy[traj.index_of(t2)])
    return InequalityReport(
        id="dissipation",
        description="int_t1^t2 int |u_t|^2 = E(t1) - E(t2)",
        tolerance=0.0,
        slacks=np.array([rel_tol * abs(drop) - res]),
        worst={"t1": t1, "t2": t2},
        constants={"residual": res, "energy_drop": drop, "relative_residual": res / drop if drop else 0.0},
    )


def energy_monotonicity_check(traj: Trajectory) -> InequalityReport:
    """``E(t_{k+1}) <= E(t_k) + tol_E`` at every step, ``tol_E`` as used by the run."""
    _require(traj)
    E = traj.energy
    tol = traj.energy_tolerance if traj.energy_tolerance is not None else np.zeros(len(E))
    slack = E[:-1] + tol[1:] - E[1:]
    if len(slack) == 0:
        slack = np.zeros(1)
    w = int(np.argmin(slack))
    return InequalityReport(
        id="energy_monotonicity",
        description="E(t_{k+1}) <= E(t_k) + 10 dt K(t_k)",
        tolerance=0.0,
        slacks=slack,
        worst={"t": float(traj.times[min(w + 1, len(traj.times) - 1)])},
        constants={"max_increase": float(np.max(np.diff(E))) if len(E) > 1 else 0.0},
    )


def convergence_rate_check(
    traj: Trajectory,
    limit,
    min_goodness: float = 0.98,
    start_fraction: float = 0.3,
    floor: float = 0.0,
) -> InequalityReport:
    """Fit ``||u(t) - u_inf||_{H^1} ~ C0 exp(-alpha0 t)`` over the tail of the samples."""
    _require(traj)
    grid = traj.grid
    ts, us = traj.all_samples()
    d = np.array([grid.h1_distance(u, limit) for u in us])
    ts = np.asarray(ts)
    win = tail_window(ts, d, start_fraction, floor)
    fit = fit_exponential((ts, d), win)
    return InequalityReport(
        id="convergence_rate",
        description="||u(t) - u_inf||_H1 <= C0 exp(-alpha0 t)",
        tolerance=0.0,
        slacks=np.array([fit.goodness - min_goodness, fit.alpha]),
        worst={"window": list(fit.window)},
        constants={"alpha0": fit.alpha, "C0": fit.C, "goodness": fit.goodness},
        fit=fit,
        extra={"times": ts, "h1_distance": d},
    )


# -- Hardy suite -----------------------------------------------------------------------


def hardy_suite(grid: DiskGrid, rng: np.random.Generator, n_functions: int = 50) -> list:
    """Boundary-vanishing test functions; the first is ``1 - r``.

    The rest are ``(1 - r)^a p(r, theta)`` with ``a`` in ``[0.6, 2]`` and ``p`` a
    random low-degree trigonometric polynomial in ``theta`` with polynomial radial
    factors.
    """
    R, T = grid.polar_mesh()
    R = R[: grid.n_r]
    T = T[: grid.n_r]
    out = [1.0 - R]
    for _ in range(n_functions - 1):
        a = rng.uniform(0.6, 2.0)
        p = np.full_like(R, rng.normal())
        for k in range(1, 4):
            ck, sk = rng.normal(size=2)
            p = p + R**k * (ck * np.cos(k * T) + sk * np.sin(k * T))
        p = p + rng.normal() * R**2
        out.append((1.0 - R) ** a * p)
    return out


def hardy_check(grid: DiskGrid, rng: np.random.Generator, n_functions: int = 50, tol: float = 0.05) -> InequalityReport:
    """Hardy ratios ``int h^2/(1-r)^2 / int |grad h|^2`` against the constant 4."""
    funcs = hardy_suite(grid, rng, n_functions)
    ratios = np.array([grid.hardy_ratio(h) for h in funcs])
    w = int(np.argmax(ratios))
    return InequalityReport(
        id="hardy",
        description="int h^2/(1-|x|)^2 <= 4 int |grad h|^2",
        tolerance=tol,
        slacks=HARDY_CONSTANT - ratios,
        worst={"function": w, "ratio": float(ratios[w])},
        constants={"hardy_constant": HARDY_CONSTANT, "max_ratio": float(ratios.max()), "ratio_one_minus_r": float(ratios[0])},
        extra={"ratios": ratios},
    )


# -- stability experiment ----------------------------------------------------------------


@dataclass
class StabilityResult:
    delta: float
    sup_distance: float
    times: np.ndarray
    distance: np.ndarray
    weighted_gradient: float

    def __iter__(self):
        yield self.sup_distance
        yield self.distance

    def to_dict(self) -> dict:
        return _py(asdict(self))


def boundary_vanishing_perturbation(grid: DiskGrid, ambient_dim: int, rng: np.random.Generator, modes: int = 3):
    """Smooth ``(1 - r^2) sum_k r^k (a_k cos k theta + b_k sin k theta)`` with unit H^1 norm."""
    R, T = grid.polar_mesh()
    w = np.zeros(grid.shape + (ambient_dim,))
    for k in range(modes):
        a, b = rng.normal(size=(2, ambient_dim))
        w += (R**k)[..., None] * (np.cos(k * T)[..., None] * a + np.sin(k * T)[..., None] * b)
    w *= (1.0 - R**2)[..., None]
    w[grid.n_r] = 0.0
    norm = math.sqrt(grid.l2_norm(w) ** 2 + 2.0 * grid.energy(w))
    return w / norm


def perturb(grid: DiskGrid, target, u0, w):
    """Project ``u0 + w`` node-wise; nodes where ``w`` vanishes keep ``u0`` exactly."""
    v = np.array(u0, dtype=float)
    moved = np.any(w != 0.0, axis=-1)
    if np.any(moved):
        v[moved] = target.project(u0[moved] + w[moved])
    return v


def stability_experiment(scenario, delta: float, seed: int | None = None, horizon: float | None = None) -> StabilityResult:
    """Co-evolve ``u0`` and a projected perturbation of H^1 size ``delta``.

    Records ``||u - v||_{L^2}`` at every step and the weighted quantity
    ``int_0^T t^{-1/2} int |grad(u - v)|^2``.
    """
    kw = scenario.simulate_kwargs() if hasattr(scenario, "simulate_kwargs") else dict(scenario)
    grid, target, u0 = kw["grid"], kw["target"], kw["u0"]
    T = float(horizon if horizon is not None else kw.get("horizon", 1.0))
    seed = seed if seed is not None else getattr(scenario, "seed", 0)
    rng = np.random.default_rng(seed)
    w = delta * boundary_vanishing_perturbation(grid, target.ambient_dim, rng)
    v0 = perturb(grid, target, u0, w)
    flow = Flow(grid, target, kw.get("scheme", "semi_implicit"), kw.get("dt", 1e-3))
    n_steps = int(math.floor(T / flow.dt + 1e-9))
    a_it = flow.iterate(u0)
    b_it = flow.iterate(v0)
    times = np.empty(n_steps + 1)
    dist = np.empty(n_steps + 1)
    weighted = 0.0
    for k in range(n_steps + 1):
        a = next(a_it)
        b = next(b_it)
        diff = a.u - b.u
        times[k] = a.t
        dist[k] = grid.l2_norm(diff)
        G = 2.0 * grid.energy(diff)
        weighted += (2.0 * math.sqrt(flow.dt) if k == 0 else flow.dt / math.sqrt(a.t)) * G
    return StabilityResult(
        delta=float(delta),
        sup_distance=float(dist.max()),
        times=times,
        distance=dist,
        weighted_gradient=float(weighted),
    )


def stability_check(results, factor: float = 10.0, linear_tol: float = 0.1) -> InequalityReport:
    """``sup ||u - v|| <= factor * delta`` and linear response across the deltas tested."""
    results = sorted(results, key=lambda r: r.delta)
    slack = []
    for r in results:
        if r.delta == 0:
            slack.append(0.0 if np.all(r.distance == 0.0) else -float(r.sup_distance) - 1.0)
        else:
            slack.append((factor * r.delta - r.sup_distance) / r.delta)
    nz = [r for r in results if r.delta > 0]
    ratios = []
    for lo, hi in zip(nz, nz[1:]):
        expected = hi.delta / lo.delta
        got = hi.sup_distance / lo.sup_distance if lo.sup_distance > 0 else math.inf
        ratios.append(got / expected)
        slack.append(linear_tol - abs(got / expected - 1.0))
    return InequalityReport(
        id="stability",
        description="sup_t ||u - v||_L2 <= 10 delta, linear in delta",
        tolerance=0.0,
        slacks=np.array(slack) if slack else np.zeros(1),
        worst={},
        constants={
            "deltas": [r.delta for r in results],
            "sup_distance": [r.sup_distance for r in results],
            "response_ratios": ratios,
            "weighted_gradient": [r.weighted_gradient for r in results],
        },
    )
