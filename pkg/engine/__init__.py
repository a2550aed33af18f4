"""
Ruelle Engine

Numerical core: shift combinatorics, transfer operators and Gibbs measures,
twisted operators, periodic orbits and zeta functions, contraction-operator
checks, Borel-Cantelli statistics, and suspension-flow correlations.
This package contains no I/O.

Submodules are imported directly (engine.thermo, engine.twist, ...); only the
error types are re-exported here.
"""

from engine.errors import (
    RuelleError,
    CapacityError,
    NonPrimitiveError,
    NoConvergenceError,
    BracketFailure,
    FlatRoofError,
    SeparationFailure,
    NonPositiveError,
    ModelFileError,
)

__all__ = [
    "RuelleError",
    "CapacityError",
    "NonPrimitiveError",
    "NoConvergenceError",
    "BracketFailure",
    "FlatRoofError",
    "SeparationFailure",
    "NonPositiveError",
    "ModelFileError",
]
