"""Experiment descriptions: parsing, validation, defaults and initial data.

A scenario is read from a TOML file with the tables below.  Every key has a
default (see :data:`DEFAULTS`); unknown tables or keys are rejected.

=============  ===================  ==========================================
table          key                  meaning
=============  ===================  ==========================================
``target``     ``kind``             unit_sphere | clifford_torus |
                                    torus_of_revolution | ellipsoid
               ``dim``, ``R``,      kind-specific parameters
               ``r``, ``axes``,
               ``reach``
``initial``    ``kind``             constant | stereographic_cap |
                                    perturbed_cap | from_file
               ``point``            constant value (projected onto the target)
               ``lambda``           cap scale
               ``eps``              bump amplitude (perturbed_cap)
               ``bump_width``       Gaussian width of the bump
               ``path``             field file written by ``save_field``
``grid``       ``n_r``, ``n_theta`` interior rings and angular nodes
``flow``       ``scheme``           semi_implicit | explicit
               ``dt``, ``horizon``  time step and final time
               ``stationarity_tol`` stop once K falls below this
               ``energy_threshold`` largest admissible E(u0)
``snapshots``  ``t0``               first geometric sample, t_k = t0 2^(k/2)
               ``dense_dt``         spacing of in-memory samples (0: none)
``checks``     ``run``              list of check names
               others               per-check options, see ``DEFAULTS``
``output``     ``root``, ``name``   run directory is ``root/name``
``seed``       (top level)          seed of every randomised suite
=============  ===================  ==========================================
"""

from __future__ import annotations

import copy
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .disk import DiskGrid, load_field
from .errors import ConfigInvalid, EnergyAboveThreshold, OutOfReach
from .flow import Scheme, max_stable_dt
from .geometry import TargetManifold, UnitSphere, make_target, stereographic_reference

CHECKS = (
    "hardy",
    "dissipation",
    "energy_monotonicity",
    "energy_gap",
    "gradient_estimate",
    "kinetic_decay",
    "convergence_rate",
    "h2_bound",
    "stability",
)

DEFAULTS: dict = {
    "seed": 0,
    "target": {"kind": "unit_sphere", "dim": 3},
    "initial": {"kind": "perturbed_cap", "lambda": 0.3, "eps": 0.05, "bump_width": 0.3},
    "grid": {"n_r": 64, "n_theta": 64},
    "flow": {
        "scheme": "semi_implicit",
        "dt": 1e-3,
        "horizon": 1.0,
        "stationarity_tol": 1e-12,
        "energy_threshold": 1.0,
    },
    "snapshots": {"t0": 0.01, "dense_dt": 0.0},
    "checks": {
        "run": [],
        "hardy_n_r": 256,
        "hardy_n_theta": 64,
        "hardy_functions": 50,
        "hardy_tol": 0.05,
        "dissipation_window": [0.1, 1.0],
        "dissipation_rel_tol": 0.05,
        "gap_rel_tol": 1e-6,
        "kinetic_rel_tol": 1e-8,
        "gradient_cap": 10.0,
        "h2_cap": 1e6,
        "convergence_min_goodness": 0.98,
        "tail_start_fraction": 0.3,
        "limit_tol": 1e-24,
        "stability_deltas": [1e-2, 1e-3, 1e-4],
        "stability_horizon": 1.0,
        "stability_factor": 10.0,
        "stability_linear_tol": 0.1,
    },
    "output": {"root": "runs", "name": "run"},
}

TARGET_KEYS = {
    "unit_sphere": {"kind", "dim"},
    "clifford_torus": {"kind"},
    "torus_of_revolution": {"kind", "R", "r"},
    "ellipsoid": {"kind", "axes", "reach"},
}
INITIAL_KEYS = {
    "constant": {"kind", "point"},
    "stereographic_cap": {"kind", "lambda"},
    "perturbed_cap": {"kind", "lambda", "eps", "bump_width"},
    "from_file": {"kind", "path"},
}
KIND_DEFAULTS = {
    "target": {
        "unit_sphere": {"dim": 3},
        "clifford_torus": {},
        "torus_of_revolution": {"R": 2.0, "r": 0.5},
        "ellipsoid": {"axes": [1.0, 1.0, 1.0]},
    },
    "initial": {
        "constant": {},
        "stereographic_cap": {"lambda": 0.3},
        "perturbed_cap": {"lambda": 0.3, "eps": 0.05, "bump_width": 0.3},
        "from_file": {},
    },
}
BUMP_DIRECTION = np.array([0.6, 0.8, 0.0])


def load_config(path) -> dict:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid([f"config: file {str(path)!r} not found"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid([f"config: {exc}"]) from None


def _merge(defaults: dict, given: dict, errors: list, prefix: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        name = f"{prefix}{key}"
        if key not in defaults:
            errors.append(f"{name}: unknown key")
            continue
        if isinstance(defaults[key], dict) and key not in ("target", "initial"):
            if not isinstance(val, dict):
                errors.append(f"{name}: expected a table")
                continue
            out[key] = _merge(defaults[key], val, errors, name + ".")
        else:
            out[key] = val
    return out


def _number(errors, name, val, *, integer=False, positive=False, nonneg=False):
    ok_type = (int,) if integer else (int, float)
    if isinstance(val, bool) or not isinstance(val, ok_type) or not math.isfinite(val):
        errors.append(f"{name}: expected {'an integer' if integer else 'a number'}, got {val!r}")
        return False
    if positive and not val > 0:
        errors.append(f"{name}: must be > 0, got {val!r}")
        return False
    if nonneg and val < 0:
        errors.append(f"{name}: must be >= 0, got {val!r}")
        return False
    return True


@dataclass
class Scenario:
    """A validated experiment; ``config`` is the fully resolved configuration."""

    config: dict
    base_dir: Path

    # -- construction -------------------------------------------------------------
    @classmethod
    def from_file(cls, path) -> "Scenario":
        path = Path(path)
        return cls.from_dict(load_config(path), base_dir=path.parent)

    @classmethod
    def from_dict(cls, given: dict, base_dir=".") -> "Scenario":
        errors: list[str] = []
        if not isinstance(given, dict):
            raise ConfigInvalid(["config: expected a table"])
        cfg = _merge(DEFAULTS, given, errors)
        # target and initial are replaced wholesale, with kind-specific keys
        for table, allowed in (("target", TARGET_KEYS), ("initial", INITIAL_KEYS)):
            t = given.get(table, DEFAULTS[table])
            if not isinstance(t, dict):
                errors.append(f"{table}: expected a table")
                cfg[table] = copy.deepcopy(DEFAULTS[table])
                continue
            kind = t.get("kind", DEFAULTS[table]["kind"])
            if kind not in allowed:
                errors.append(f"{table}.kind: unknown kind {kind!r} (choose from {sorted(allowed)})")
                continue
            for key in t:
                if key not in allowed[kind]:
                    errors.append(f"{table}.{key}: unknown key for kind {kind!r}")
            cfg[table] = {"kind": kind, **KIND_DEFAULTS[table][kind], **t}
        self = cls(cfg, Path(base_dir))
        self._validate(errors)
        if errors:
            raise ConfigInvalid(errors)
        return self

    def _validate(self, errors: list) -> None:
        c = self.config
        _number(errors, "seed", c["seed"], integer=True, nonneg=True)
        g = c["grid"]
        ok_r = _number(errors, "grid.n_r", g["n_r"], integer=True, positive=True)
        if ok_r and g["n_r"] < 8:
            errors.append(f"grid.n_r: must be >= 8, got {g['n_r']}")
            ok_r = False
        ok_t = _number(errors, "grid.n_theta", g["n_theta"], integer=True, positive=True)
        if ok_t and (g["n_theta"] < 16 or g["n_theta"] % 2):
            errors.append(f"grid.n_theta: must be even and >= 16, got {g['n_theta']}")
            ok_t = False
        f = c["flow"]
        scheme = None
        try:
            scheme = Scheme.parse(f["scheme"])
        except ValueError:
            errors.append(f"flow.scheme: unknown scheme {f['scheme']!r}")
        ok_dt = _number(errors, "flow.dt", f["dt"], positive=True)
        _number(errors, "flow.horizon", f["horizon"], positive=True)
        _number(errors, "flow.stationarity_tol", f["stationarity_tol"], nonneg=True)
        _number(errors, "flow.energy_threshold", f["energy_threshold"], positive=True)
        if ok_r and ok_t and ok_dt and scheme is not None:
            limit = max_stable_dt(DiskGrid(g["n_r"], g["n_theta"]), scheme)
            if f["dt"] > limit * (1 + 1e-12):
                errors.append(f"flow.dt: {f['dt']:g} violates the {scheme.value} stability rule dt <= {limit:.4g}")
        s = c["snapshots"]
        _number(errors, "snapshots.t0", s["t0"], positive=True)
        _number(errors, "snapshots.dense_dt", s["dense_dt"], nonneg=True)
        ch = c["checks"]
        run = ch["run"]
        if not isinstance(run, list) or any(x not in CHECKS for x in run):
            errors.append(f"checks.run: expected a list drawn from {list(CHECKS)}, got {run!r}")
        for key in ("hardy_n_r", "hardy_n_theta", "hardy_functions"):
            _number(errors, f"checks.{key}", ch[key], integer=True, positive=True)
        for key in (
            "hardy_tol", "dissipation_rel_tol", "gap_rel_tol", "kinetic_rel_tol", "gradient_cap",
            "h2_cap", "convergence_min_goodness", "tail_start_fraction", "limit_tol",
            "stability_horizon", "stability_factor", "stability_linear_tol",
        ):
            _number(errors, f"checks.{key}", ch[key], nonneg=True)
        win = ch["dissipation_window"]
        if not (isinstance(win, list) and len(win) == 2 and all(isinstance(x, (int, float)) for x in win) and win[0] < win[1]):
            errors.append(f"checks.dissipation_window: expected [t1, t2] with t1 < t2, got {win!r}")
        deltas = ch["stability_deltas"]
        if not (isinstance(deltas, list) and all(isinstance(x, (int, float)) and x >= 0 for x in deltas)):
            errors.append(f"checks.stability_deltas: expected a list of non-negative numbers, got {deltas!r}")
        o = c["output"]
        for key in ("root", "name"):
            if not isinstance(o[key], str) or not o[key]:
                errors.append(f"output.{key}: expected a non-empty string")
        if errors:
            return
        try:
            self.target
        except (ValueError, TypeError) as exc:
            errors.append(f"target: {exc}")
            return
        self._validate_initial(errors)

    def _validate_initial(self, errors: list) -> None:
        ini = self.config["initial"]
        kind = ini["kind"]
        if kind in ("stereographic_cap", "perturbed_cap"):
            if not isinstance(self.target, UnitSphere) or self.target.ambient_dim != 3:
                errors.append(f"initial.kind: {kind} needs target unit_sphere with dim = 3")
                return
            if _number(errors, "initial.lambda", ini.get("lambda", 0.3), nonneg=True) is False:
                return
        if kind == "perturbed_cap":
            _number(errors, "initial.eps", ini.get("eps", 0.05), nonneg=True)
            _number(errors, "initial.bump_width", ini.get("bump_width", 0.3), positive=True)
        if kind == "constant":
            p = ini.get("point")
            if not (isinstance(p, list) and len(p) == self.target.ambient_dim):
                errors.append(f"initial.point: expected {self.target.ambient_dim} coordinates, got {p!r}")
        if kind == "from_file" and not isinstance(ini.get("path"), str):
            errors.append("initial.path: expected a file path")
        if errors:
            return
        try:
            self.u0
        except (OutOfReach, ValueError, OSError) as exc:
            errors.append(f"initial: {exc}")

    # -- resolved objects ----------------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    @property
    def grid(self) -> DiskGrid:
        g = self.config["grid"]
        return DiskGrid(int(g["n_r"]), int(g["n_theta"]))

    @property
    def target(self) -> TargetManifold:
        if not hasattr(self, "_target"):
            self._target = make_target(self.config["target"])
        return self._target

    @property
    def scheme(self) -> Scheme:
        return Scheme.parse(self.config["flow"]["scheme"])

    @property
    def dt(self) -> float:
        return float(self.config["flow"]["dt"])

    @property
    def horizon(self) -> float:
        return float(self.config["flow"]["horizon"])

    @property
    def checks(self) -> list:
        return list(self.config["checks"]["run"])

    def option(self, key):
        return self.config["checks"][key]

    @property
    def u0(self) -> np.ndarray:
        if not hasattr(self, "_u0"):
            self._u0 = initial_field(self.config["initial"], self.grid, self.target, self.base_dir)
        return self._u0

    @property
    def initial_energy(self) -> float:
        return self.grid.energy(self.u0)

    def check_energy(self) -> None:
        E0 = self.initial_energy
        thr = float(self.config["flow"]["energy_threshold"])
        if E0 > thr:
            raise EnergyAboveThreshold(f"E(u0)={E0:.6g} exceeds flow.energy_threshold={thr:g}")

    def snapshot_times(self) -> list:
        t0 = float(self.config["snapshots"]["t0"])
        out, k = [], 0
        while t0 * 2 ** (k / 2) <= self.horizon * (1 + 1e-12):
            out.append(t0 * 2 ** (k / 2))
            k += 1
        return out

    def dense_times(self) -> list:
        h = float(self.config["snapshots"]["dense_dt"])
        if h <= 0:
            return []
        return list(np.arange(0.0, self.horizon + 0.5 * h, h))

    def simulate_kwargs(self) -> dict:
        self.check_energy()
        f = self.config["flow"]
        return {
            "grid": self.grid,
            "target": self.target,
            "u0": self.u0,
            "scheme": self.scheme,
            "dt": self.dt,
            "horizon": self.horizon,
            "stationarity_tol": float(f["stationarity_tol"]),
            "snapshot_times": self.snapshot_times(),
            "dense_times": self.dense_times(),
        }

    def with_changes(self, **dotted) -> "Scenario":
        """Copy with ``table.key = value`` overrides, e.g. ``with_changes(**{"grid.n_r": 32})``."""
        cfg = copy.deepcopy(self.config)
        for key, val in dotted.items():
            set_dotted(cfg, key, val)
        return Scenario.from_dict(cfg, self.base_dir)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.config)

    def __eq__(self, other) -> bool:
        return isinstance(other, Scenario) and self.config == other.config


def set_dotted(cfg: dict, key: str, val) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = val


def initial_field(ini: dict, grid: DiskGrid, target: TargetManifold, base_dir=".") -> np.ndarray:
    kind = ini["kind"]
    if kind == "constant":
        p = target.project(np.asarray(ini["point"], dtype=float))
        return np.broadcast_to(p, grid.shape + p.shape).copy()
    if kind == "stereographic_cap":
        ref = stereographic_reference(float(ini.get("lambda", 0.3)))
        return grid.evaluate(ref)
    if kind == "perturbed_cap":
        return perturbed_cap(grid, float(ini.get("lambda", 0.3)), float(ini.get("eps", 0.05)), float(ini.get("bump_width", 0.3)))
    if kind == "from_file":
        path = Path(ini["path"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        g, u = load_field(path)
        if g != grid:
            raise ValueError(f"field file grid {g} differs from the configured grid {grid}")
        return u
    raise ValueError(f"unknown initial kind {kind!r}")


def perturbed_cap(grid: DiskGrid, lam: float = 0.3, eps: float = 0.05, width: float = 0.3) -> np.ndarray:
    """Cap map plus ``eps (1 - r^2)^2 exp(-r^2 / 2 w^2)`` along a fixed direction, renormalised.

    The bump vanishes on the boundary circle, so the trace is that of the cap.
    """
    ref = stereographic_reference(lam)
    R, T = grid.polar_mesh()
    u = ref(R, T)
    bump = eps * (1 - R**2) ** 2 * np.exp(-(R**2) / (2 * width**2))
    v = u + bump[..., None] * BUMP_DIRECTION
    v[grid.n_r] = u[grid.n_r]
    v[: grid.n_r] /= np.linalg.norm(v[: grid.n_r], axis=-1, keepdims=True)
    return v


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package, e.g. ``"perturbed-cap.toyscale"``."""
    here = Path(__file__).parent / "configs"
    path = here / (name if name.endswith(".toml") else name + ".toml")
    if not path.exists():
        raise FileNotFoundError(f"no bundled config {name!r}; available: {sorted(p.stem for p in here.glob('*.toml'))}")
    return path


def bundled_configs() -> list:
    return sorted((Path(__file__).parent / "configs").glob("*.toml"))
