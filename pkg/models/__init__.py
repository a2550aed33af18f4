"""
Ruelle Models

Symbolic systems, locally constant functions, and validated file schemas.
"""

from models.subshift import Subshift, WordIndex, ThetaParams, Word
from models.functions import DepthFn, Profile
from models.symbolic_model import SymbolicModel

__all__ = [
    "Subshift",
    "WordIndex",
    "ThetaParams",
    "Word",
    "DepthFn",
    "Profile",
    "SymbolicModel",
]
