"""Numerical laboratory for the harmonic map heat flow on the unit disk."""

__version__ = "0.1.0"

from .disk import DiskGrid, load_field, save_field
from .errors import HMHFError
from .flow import ExplicitProjection, Flow, FlowState, SemiImplicitProjection, Scheme, Trajectory, simulate, solve_harmonic
from .geometry import (
    CliffordTorus,
    Ellipsoid,
    LevelSet,
    TorusOfRevolution,
    UnitSphere,
    make_target,
    stereographic_reference,
)
from .scenario import Scenario

__all__ = [
    "CliffordTorus",
    "DiskGrid",
    "Ellipsoid",
    "ExplicitProjection",
    "Flow",
    "FlowState",
    "HMHFError",
    "LevelSet",
    "Scenario",
    "Scheme",
    "SemiImplicitProjection",
    "TorusOfRevolution",
    "Trajectory",
    "UnitSphere",
    "load_field",
    "make_target",
    "save_field",
    "simulate",
    "solve_harmonic",
    "stereographic_reference",
]
