"""Thermodynamic formalism on Julia sets of rational maps."""

from .errors import (
    BranchObstruction,
    CombinatorialExplosion,
    ConfigError,
    DivergentWeights,
    EmptyCells,
    FixedPointInput,
    InconsistentCurve,
    NoSecondPreimage,
    ParseError,
    Reducible,
    RootSolveFailure,
    SingularOrbit,
    ThermError,
)
from .rational import PeriodicPoint, RationalMap, classify_multiplier
from .roots import aberth_functional, aberth_roots, aberth_roots_batch, cluster_roots
from .sphere import SpherePoint, as_point, chordal_distance

__version__ = "0.1.0"

__all__ = [
    "BranchObstruction",
    "CombinatorialExplosion",
    "ConfigError",
    "DivergentWeights",
    "EmptyCells",
    "FixedPointInput",
    "InconsistentCurve",
    "NoSecondPreimage",
    "ParseError",
    "PeriodicPoint",
    "RationalMap",
    "Reducible",
    "RootSolveFailure",
    "SingularOrbit",
    "SpherePoint",
    "ThermError",
    "aberth_functional",
    "aberth_roots",
    "aberth_roots_batch",
    "as_point",
    "chordal_distance",
    "classify_multiplier",
    "cluster_roots",
]
