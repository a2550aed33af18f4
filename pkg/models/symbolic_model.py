"""
A loaded symbolic model: subshift, metric parameter, and named functions.
"""

from dataclasses import dataclass, field

from models.functions import DepthFn
from models.subshift import Subshift, ThetaParams


@dataclass(frozen=True)
class SymbolicModel:
    """
    Subshift plus the named potentials and roofs of one model file.

    Usage:
        model.function("tau")   # DepthFn
        model.sha256            # hash of the canonical model file
    """
    name: str
    subshift: Subshift
    theta: ThetaParams
    functions: dict[str, DepthFn] = field(default_factory=dict)
    sha256: str = ""

    def function(self, name: str) -> DepthFn:
        try:
            return self.functions[name]
        except KeyError:
            known = ", ".join(sorted(self.functions)) or "none"
            raise KeyError(f"model '{self.name}' has no function '{name}' (known: {known})") from None
