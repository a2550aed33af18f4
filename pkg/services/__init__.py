"""
Ruelle Services

Model loading, result export and the acceptance self-test.
"""

from services.export import ResultExporter, RunMetadata
from services.model_loader import load_model, load_observable

__all__ = ["ResultExporter", "RunMetadata", "load_model", "load_observable"]
