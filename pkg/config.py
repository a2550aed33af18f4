"""
Ruelle Configuration

Centralized settings, paths, caps, and numerical tolerances for the toolkit.
"""

import math
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import appdirs


# Application info
APP_NAME = "ruelle"
APP_AUTHOR = "ruelle"
APP_VERSION = "1.0.0"

# Environment fallback for --threads
THREADS_ENV_VAR = "RUELLE_THREADS"


@dataclass(frozen=True)
class Paths:
    """Toolkit paths."""
    # Data directory (default output location)
    data_dir: Path = Path(appdirs.user_data_dir(APP_NAME, APP_AUTHOR))

    # Cache directory (scratch files)
    cache_dir: Path = Path(appdirs.user_cache_dir(APP_NAME, APP_AUTHOR))

    # Log directory
    log_dir: Path = Path(appdirs.user_log_dir(APP_NAME, APP_AUTHOR))

    @property
    def exports(self) -> Path:
        return self.data_dir / "exports"

    @property
    def runs(self) -> Path:
        return self.data_dir / "runs"

    def ensure_directories(self) -> None:
        """Create all required directories."""
        for dir_path in [self.data_dir, self.cache_dir, self.log_dir,
                         self.exports, self.runs]:
            dir_path.mkdir(parents=True, exist_ok=True)


@dataclass
class CapacitySettings:
    """Enumeration caps (the CLI may override them for one run)."""
    # Maximum number of admissible words materialized at one depth
    word_cap: int = 10**8

    # Maximum number of block states in a transfer matrix
    block_state_cap: int = 2**20

    # Maximum total number of periodic points (sum of traces) enumerated
    orbit_cap: int = 10**8

    # Largest horizon M*N + |V_b| (in symbols) handled by the exact Borel-Cantelli mode
    exact_horizon: int = 24

    @contextmanager
    def override(self, **caps: int):
        """Temporarily replace caps, e.g. `with CAPACITY.override(orbit_cap=10**6):`."""
        previous = {}
        for name, value in caps.items():
            if not hasattr(self, name):
                raise AttributeError(f"unknown capacity setting '{name}'")
            if value <= 0:
                raise ValueError(f"capacity setting '{name}' must be positive, got {value}")
            previous[name] = getattr(self, name)
            setattr(self, name, value)
        try:
            yield self
        finally:
            for name, value in previous.items():
                setattr(self, name, value)


@dataclass(frozen=True)
class SolverSettings:
    """Eigen-solve and root-finding tolerances."""
    # Relative residual for power iteration
    residual_tol: float = 1e-12

    # Power-iteration cap
    max_iterations: int = 100_000

    # |Pr(f - s*tau)| target for P_f
    pressure_tol: float = 1e-10

    # Bisection stage tolerance before secant refinement
    bisect_xtol: float = 1e-6

    # Tolerance for normalization checks (M_a 1 = 1)
    normalization_tol: float = 1e-12


@dataclass(frozen=True)
class TwistSettings:
    """Twisted-operator scan settings."""
    # Contraction rate tested by m_star
    rho: float = 0.9

    # Largest power tried before the infinite sentinel
    m_cap: int = 400

    # Seeded random test functions added to the indicator basis
    random_functions: int = 32

    # Depth of the basis test functions
    basis_depth: int = 3

    # Power at which the Gelfand profile is read off
    gelfand_m: int = 50

    # Default |b| grid for scans
    b_grid: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)


@dataclass(frozen=True)
class DolgopyatSettings:
    """Contraction-operator lab settings."""
    # Block length of the N-block recoding
    block_length: int = 4

    # Separation threshold delta_1
    delta1: float = 0.1

    # Angle epsilon_3 fixing mu_0 = min(1/4, (1 - cos eps3)/20)
    eps3: float = math.pi / 2

    # Largest co-length of the paired sub-cylinders
    max_colength: int = 4

    # Largest number of N_J steps actually iterated
    iterate_cap: int = 2000

    # Random cone members tested per family
    cone_members: int = 100


@dataclass(frozen=True)
class CorrelationSettings:
    """Monte Carlo correlation settings."""
    # Samples processed per chunk (one RNG stream per chunk)
    chunk_size: int = 2**17

    # Jackknife blocks
    jackknife_blocks: int = 20

    # Confidence level for decay-rate intervals
    ci_level: float = 0.95

    # Window threshold |rho| > window_sigmas * SE
    window_sigmas: float = 3.0


def _threads_from_env() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ThreadSettings:
    """Worker-thread settings."""
    threads: int = field(default_factory=_threads_from_env)


# Singleton instances
PATHS = Paths()
CAPACITY = CapacitySettings()
SOLVER_SETTINGS = SolverSettings()
TWIST_SETTINGS = TwistSettings()
DOLGOPYAT_SETTINGS = DolgopyatSettings()
CORRELATION_SETTINGS = CorrelationSettings()
THREAD_SETTINGS = ThreadSettings()


def init_config() -> None:
    """Initialize configuration and create required directories."""
    PATHS.ensure_directories()
