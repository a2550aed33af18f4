"""
Pydantic schemas for model files, observable files and experiment configs.
"""

import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ============ Function Schemas ============

class ConstantSpec(BaseModel):
    """Constant function."""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["constant"]
    value: float


class FirstSymbolSpec(BaseModel):
    """Function of the first symbol, one value per symbol."""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["first_symbol"]
    values: list[float] = Field(..., min_length=1)


class TableSpec(BaseModel):
    """Function of the first `depth` symbols, keyed by word strings."""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["table"]
    depth: int = Field(..., ge=1)
    values: dict[str, float] = Field(..., min_length=1)


class SumTerm(BaseModel):
    model_config = ConfigDict(extra="forbid")
    ref: str = Field(..., min_length=1)
    scale: float = 1.0


class SumSpec(BaseModel):
    """Linear combination of other named functions."""
    model_config = ConfigDict(extra="forbid")
    kind: Literal["sum"]
    terms: list[SumTerm] = Field(..., min_length=1)


FunctionSpec = Annotated[
    Union[ConstantSpec, FirstSymbolSpec, TableSpec, SumSpec],
    Field(discriminator="kind"),
]


# ============ Model File ============

class ModelFile(BaseModel):
    """Schema of a JSON model file (see docs/model_schema.md)."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1, max_length=200)
    alphabet_size: int = Field(..., ge=1)
    transition: list[list[int]]
    theta: float = Field(0.5, gt=0.0, lt=1.0)
    functions: dict[str, FunctionSpec] = Field(default_factory=dict)

    @field_validator("transition")
    @classmethod
    def transition_is_binary(cls, v: list[list[int]]) -> list[list[int]]:
        for row in v:
            if any(entry not in (0, 1) for entry in row):
                raise ValueError("transition entries must be 0 or 1")
        return v

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelFile":
        k = self.alphabet_size
        if len(self.transition) != k or any(len(row) != k for row in self.transition):
            raise ValueError(f"transition must be a {k}x{k} matrix")
        for name, spec in self.functions.items():
            if isinstance(spec, FirstSymbolSpec) and len(spec.values) != k:
                raise ValueError(
                    f"function '{name}' needs {k} first-symbol values, got {len(spec.values)}"
                )
            if isinstance(spec, SumSpec):
                for term in spec.terms:
                    if term.ref not in self.functions:
                        raise ValueError(f"function '{name}' refers to unknown function '{term.ref}'")
        return self


# ============ Observable File ============

class ProfileSpec(BaseModel):
    """Piecewise polynomial on [0, 1), ascending coefficients per piece."""
    model_config = ConfigDict(extra="forbid")
    breaks: list[float] = Field(..., min_length=2)
    coefficients: list[list[float]] = Field(..., min_length=1, max_length=8)

    @model_validator(mode="after")
    def check_pieces(self) -> "ProfileSpec":
        if len(self.coefficients) != len(self.breaks) - 1:
            raise ValueError("profile needs one coefficient list per piece")
        return self


class ObservableFile(BaseModel):
    """A(x, s) = base(x) * profile(s / tau(x)); base is a function spec or a model function name."""
    model_config = ConfigDict(extra="forbid")
    base: Union[str, FunctionSpec]
    profile: Optional[ProfileSpec] = None


# ============ Experiment Config ============

class CapsConfig(BaseModel):
    """Per-run capacity overrides."""
    model_config = ConfigDict(extra="forbid")
    word_cap: Optional[int] = Field(None, gt=0)
    block_state_cap: Optional[int] = Field(None, gt=0)
    orbit_cap: Optional[int] = Field(None, gt=0)
    exact_horizon: Optional[int] = Field(None, gt=0)

    def overrides(self) -> dict[str, int]:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ThermoParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["thermo"] = "thermo"
    solve_pf: bool = True
    gibbs_depth: int = Field(12, ge=1)
    truncation: list[int] = Field(default_factory=list)
    lipschitz: list[float] = Field(default_factory=list)


class TwistScanParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["twist-scan"] = "twist-scan"
    a: float = 0.0
    b_min: float = Field(1.0, ge=1.0)
    b_max: float = Field(128.0, ge=1.0)
    b_values: list[float] = Field(default_factory=list)
    symmetric: bool = False
    rho: Optional[float] = Field(None, gt=0.0, lt=1.0)
    m_cap: Optional[int] = Field(None, gt=0)
    basis_depth: Optional[int] = Field(None, ge=1)
    random_functions: Optional[int] = Field(None, ge=0)
    lasota_yorke: bool = False
    ly_m_max: int = Field(20, ge=1)
    ly_b: list[float] = Field(default_factory=lambda: [1.0, 4.0, 16.0])
    gelfand: bool = False

    @field_validator("b_values", "ly_b")
    @classmethod
    def check_frequencies(cls, v: list[float]) -> list[float]:
        small = [b for b in v if abs(b) < 1.0]
        if small:
            raise ValueError(f"frequencies need |b| >= 1, got {small}")
        return v

    @model_validator(mode="after")
    def check_range(self) -> "TwistScanParams":
        if self.b_min > self.b_max:
            raise ValueError(f"b_min {self.b_min} exceeds b_max {self.b_max}")
        return self

    def grid(self) -> list[float]:
        """Explicit b values, else powers of 2 in [b_min, b_max] (mirrored when symmetric)."""
        if self.b_values:
            values = list(self.b_values)
        else:
            lo = math.ceil(math.log2(self.b_min) - 1e-12)
            hi = math.floor(math.log2(self.b_max) + 1e-12)
            values = [2.0 ** j for j in range(lo, hi + 1)]
        if self.symmetric:
            values = sorted({-v for v in values} | set(values))
        return values


class OrbitsParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["orbits"] = "orbits"
    lambda_max: float = Field(12.0, gt=0.0)
    steps: int = Field(12, ge=1)


class ZetaParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["zeta"] = "zeta"
    s: str = "1.0+0.0i"
    n_max: int = Field(30, ge=1)
    check_orbits: bool = False

    @field_validator("s")
    @classmethod
    def check_complex(cls, v: str) -> str:
        parse_complex(v)
        return v

    def s_value(self) -> complex:
        return parse_complex(self.s)


class DolgopyatParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["dolgopyat"] = "dolgopyat"
    b: float = 16.0
    N: Optional[int] = Field(None, ge=1)
    delta1: Optional[float] = Field(None, gt=0.0)
    eps3: Optional[float] = Field(None, gt=0.0, le=math.pi)
    E: Optional[float] = Field(None, gt=0.0)
    max_colength: Optional[int] = Field(None, ge=1)
    steps: Optional[int] = Field(None, ge=1)
    borel_cantelli_m: Optional[int] = Field(None, ge=1)


class CorrelateParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["correlate"] = "correlate"
    A: Path
    B: Path
    t: str = "0:20:0.5"
    n: int = Field(1_000_000, ge=2)
    chunk_size: Optional[int] = Field(None, ge=1)
    base_lags: int = Field(0, ge=0)

    @field_validator("t")
    @classmethod
    def check_grid(cls, v: str) -> str:
        parse_time_grid(v)
        return v

    def time_grid(self) -> list[float]:
        return parse_time_grid(self.t)


class SelftestParams(BaseModel):
    model_config = ConfigDict(extra="forbid")
    command: Literal["selftest"] = "selftest"
    full: bool = False


CommandParams = Annotated[
    Union[ThermoParams, TwistScanParams, OrbitsParams, ZetaParams, DolgopyatParams,
          CorrelateParams, SelftestParams],
    Field(discriminator="command"),
]


class ExperimentConfig(BaseModel):
    """
    One run of one subcommand.

    Usage:
        config = ExperimentConfig.model_validate({
            "model": "sample_models/full2_roof_sqrt2.json",
            "params": {"command": "orbits", "lambda_max": 12},
        })
    """
    model_config = ConfigDict(extra="forbid")

    model: Optional[Path] = None
    potential: str = "f"
    roof: str = "tau"
    seed: int = Field(0, ge=0)
    out: Optional[Path] = None
    threads: Optional[int] = Field(None, ge=1)
    caps: CapsConfig = Field(default_factory=CapsConfig)
    params: CommandParams

    @property
    def command(self) -> str:
        return self.params.command

    @model_validator(mode="after")
    def model_required(self) -> "ExperimentConfig":
        if self.model is None and self.command != "selftest":
            raise ValueError(f"'{self.command}' needs a model file")
        return self


def parse_time_grid(text: str) -> list[float]:
    """'start:stop:step' (inclusive stop) or a comma-separated list of times."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"time grid '{text}' must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start or start < 0:
            raise ValueError(f"time grid '{text}' needs 0 <= start <= stop and step > 0")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(count)]
    values = [float(p) for p in text.split(",") if p.strip()]
    if not values or any(v < 0 for v in values):
        raise ValueError(f"time grid '{text}' needs nonnegative times")
    return values


def parse_complex(text: str) -> complex:
    """'1.0+0.5i', '1.0+0.5j' or a plain real number."""
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise ValueError(f"'{text}' is not a complex number") from None
