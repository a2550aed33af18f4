"""
Model Loader

Read JSON model and observable files into engine objects. The model hash is the
SHA-256 of the canonical JSON (sorted keys, compact separators), so formatting
changes to a file do not change the hash recorded in outputs.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import ValidationError

from engine.correlator import SuspensionObservable
from engine.errors import ModelFileError
from models.functions import DepthFn, Profile
from models.schemas import (
    ConstantSpec, FirstSymbolSpec, ModelFile, ObservableFile, SumSpec, TableSpec,
)
from models.subshift import Subshift, ThetaParams, Word
from models.symbolic_model import SymbolicModel


logger = logging.getLogger(__name__)


def canonical_sha256(raw: Any) -> str:
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def format_validation_error(error: ValidationError) -> str:
    """One 'field.path: message' line per pydantic error."""
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def _read_json(path: Path) -> Any:
    if not path.is_file():
        raise ModelFileError(str(path), "file not found")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ModelFileError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}") from e


def parse_word(text: str, alphabet_size: int) -> Word:
    """Symbol digits ('0110'), comma separated when the alphabet exceeds ten symbols."""
    text = text.strip()
    if alphabet_size > 10 or "," in text:
        parts = [p for p in text.split(",") if p.strip()]
    else:
        parts = list(text)
    try:
        word = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"word '{text}' is not a sequence of symbols") from None
    if not word or any(not 0 <= s < alphabet_size for s in word):
        raise ValueError(f"word '{text}' uses symbols outside 0..{alphabet_size - 1}")
    return word


class _FunctionResolver:
    """Builds DepthFns from specs, resolving 'sum' references depth first."""

    def __init__(self, subshift: Subshift, specs: dict,
                 built: Optional[dict[str, DepthFn]] = None):
        self.subshift = subshift
        self.specs = specs
        self.built: dict[str, DepthFn] = dict(built or {})

    def resolve(self, name: str, trail: tuple[str, ...] = ()) -> DepthFn:
        if name in self.built:
            return self.built[name]
        if name in trail:
            cycle = " -> ".join(trail + (name,))
            raise ValueError(f"function references form a cycle: {cycle}")
        if name not in self.specs:
            raise ValueError(f"unknown function '{name}'")
        fn = self.build(self.specs[name], trail + (name,))
        self.built[name] = fn
        return fn

    def build(self, spec, trail: tuple[str, ...] = ()) -> DepthFn:
        if isinstance(spec, ConstantSpec):
            return DepthFn.constant(self.subshift, spec.value)
        if isinstance(spec, FirstSymbolSpec):
            return DepthFn.first_symbol(self.subshift, spec.values)
        if isinstance(spec, TableSpec):
            k = self.subshift.alphabet_size
            table = {}
            for key, value in spec.values.items():
                word = parse_word(key, k)
                if len(word) != spec.depth:
                    raise ValueError(f"table word '{key}' does not have depth {spec.depth}")
                table[word] = value
            return DepthFn.from_table(self.subshift, spec.depth, table)
        if isinstance(spec, SumSpec):
            total: Optional[DepthFn] = None
            for term in spec.terms:
                part = self.resolve(term.ref, trail) * term.scale
                total = part if total is None else total + part
            return total
        raise ValueError(f"unsupported function kind {type(spec).__name__}")


def load_model(path: str | Path) -> SymbolicModel:
    """
    Load and validate a model file.

    Args:
        path: JSON model file

    Returns:
        SymbolicModel with every named function built

    Raises:
        ModelFileError: if the file is missing, is not JSON, or violates the schema
    """
    path = Path(path)
    raw = _read_json(path)
    try:
        spec = ModelFile.model_validate(raw)
    except ValidationError as e:
        raise ModelFileError(str(path), format_validation_error(e)) from e

    try:
        subshift = Subshift(np.array(spec.transition, dtype=np.int64))
        resolver = _FunctionResolver(subshift, spec.functions)
        functions = {name: resolver.resolve(name) for name in spec.functions}
    except ValueError as e:
        raise ModelFileError(str(path), str(e)) from e

    model = SymbolicModel(name=spec.name, subshift=subshift, theta=ThetaParams(spec.theta),
                          functions=functions, sha256=canonical_sha256(raw))
    logger.info("loaded model '%s' (%d symbols, functions: %s)", model.name,
                subshift.alphabet_size, ", ".join(sorted(functions)) or "none")
    return model


def load_observable(path: str | Path, model: SymbolicModel) -> SuspensionObservable:
    """
    Load an observable file against a loaded model.

    Raises:
        ModelFileError: if the file is missing or malformed, or names an unknown function
    """
    path = Path(path)
    raw = _read_json(path)
    try:
        spec = ObservableFile.model_validate(raw)
    except ValidationError as e:
        raise ModelFileError(str(path), format_validation_error(e)) from e
    try:
        if isinstance(spec.base, str):
            base = model.function(spec.base)
        else:
            base = _FunctionResolver(model.subshift, {}, model.functions).build(spec.base)
        profile = (Profile(spec.profile.breaks, spec.profile.coefficients)
                   if spec.profile is not None else Profile.constant())
    except (KeyError, ValueError) as e:
        raise ModelFileError(str(path), str(e.args[0]) if e.args else str(e)) from e
    return SuspensionObservable(base=base, profile=profile)
