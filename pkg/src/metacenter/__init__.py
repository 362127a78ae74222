"""Toolkit for learning a vessel's dynamic metacenter from Euler angles."""

__version__ = "0.1.0"

from .hydrostatics import (
    AttitudeSample,
    HullSpec,
    HullState,
    MetacenterPosition,
    compute_metacenter,
    default_hull,
    load_hull,
    make_box_hull,
    metacenter_batch,
    solve_equilibrium_draft,
)

__all__ = [
    "AttitudeSample",
    "HullSpec",
    "HullState",
    "MetacenterPosition",
    "compute_metacenter",
    "default_hull",
    "load_hull",
    "make_box_hull",
    "metacenter_batch",
    "solve_equilibrium_draft",
    "__version__",
]
