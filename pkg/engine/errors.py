"""
Domain errors raised by the engine.

Each error refines the built-in category it belongs to, so callers that only
know about ValueError/RuntimeError still catch them.
"""

from typing import Optional


class RuelleError(Exception):
    """Base class for toolkit errors."""


class CapacityError(RuelleError, RuntimeError):
    """A configured enumeration cap would be exceeded."""

    def __init__(self, what: str, requested: int, cap: int):
        super().__init__(f"{what}: {requested} exceeds the configured cap of {cap}")
        self.what = what
        self.requested = requested
        self.cap = cap


class NonPrimitiveError(RuelleError, ValueError):
    """Transition structure is not irreducible and aperiodic."""


class NoConvergenceError(RuelleError, RuntimeError):
    """Power iteration stalled before reaching the residual target."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class BracketFailure(RuelleError, RuntimeError):
    """The initial bracket for P_f does not straddle zero."""

    def __init__(self, lower: float, upper: float, p_lower: float, p_upper: float):
        super().__init__(
            f"pressure bracket [{lower:.6g}, {upper:.6g}] does not straddle 0 "
            f"(Pr = {p_lower:.6g}, {p_upper:.6g})"
        )
        self.lower = lower
        self.upper = upper


class FlatRoofError(RuelleError, ValueError):
    """Every branch pair has identical Birkhoff roof sums."""


class SeparationFailure(RuelleError, RuntimeError):
    """No sub-cylinder pair reaches the separation threshold."""

    def __init__(self, message: str, best_delta: float, cylinder: Optional[tuple[int, ...]] = None):
        super().__init__(f"{message} (best achieved delta {best_delta:.6g})")
        self.best_delta = best_delta
        self.cylinder = cylinder


class NonPositiveError(RuelleError, ValueError):
    """A function required to be positive is not."""


class ModelFileError(RuelleError, ValueError):
    """A model or observable file is missing or malformed."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason
