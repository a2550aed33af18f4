"""
Twisted Operators - L_ab = L_{f^(a) - i b tau} and eventual contraction.

Contraction is measured two ways: the spectral radius of the finite twisted
block matrix, and m_star, the first power from which every test function
contracts at rate rho in the norm |h|_0 + |h|_theta / |b|.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from config import THREAD_SETTINGS, TWIST_SETTINGS
from engine.shift import common_prefix_lengths, lip_seminorm, lip_seminorm_table
from engine.thermo import FlowModel
from models.functions import DepthFn
from models.subshift import ThetaParams, WordIndex


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TwistParams:
    """Twist offsets (a, b), |b| >= 1, and the metric parameter."""
    a: float = 0.0
    b: float = 1.0
    theta: ThetaParams = field(default_factory=ThetaParams)

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"twist offsets must be finite, got a={self.a}, b={self.b}")
        if abs(self.b) < 1.0:
            raise ValueError(f"twisted operators need |b| >= 1, got b={self.b}")


def theta_b_norm(h: DepthFn, theta: ThetaParams | float, b: float) -> float:
    """|h|_0 + |h|_theta / |b|."""
    if b == 0:
        raise ValueError("the (theta, b) norm needs b != 0")
    return h.sup_norm() + lip_seminorm(h, theta) / abs(b)


def theta_b_norm_table(index: WordIndex, values: np.ndarray, theta: float, b: float) -> np.ndarray:
    """Column-wise (theta, b) norms of a (words x functions) table."""
    table = values.reshape(values.shape[0], -1)
    return np.abs(table).max(axis=0) + lip_seminorm_table(index, table, theta) / abs(b)


def twisted_apply(model: FlowModel, h: DepthFn, params: TwistParams, m: int = 1) -> DepthFn:
    """L_ab^m h by m block-matrix applications."""
    return model.twisted_operator(params.a, params.b).apply(h, m)


# ============ Lasota-Yorke ============

@dataclass(frozen=True)
class LasotaYorkeResult:
    """Smallest constant A0 making the Lasota-Yorke inequality hold on all test pairs."""
    m: int
    b: float
    a0_measured: float
    pairs: int


def _same_symbol_pairs(index: WordIndex) -> tuple[np.ndarray, np.ndarray]:
    """Ordered pairs (u, u') of distinct words sharing their first symbol."""
    first = index.words[:, 0]
    left, right = [], []
    for symbol in np.unique(first):
        rows = np.flatnonzero(first == symbol)
        i, j = np.meshgrid(rows, rows, indexing="ij")
        mask = i != j
        left.append(i[mask])
        right.append(j[mask])
    return np.concatenate(left), np.concatenate(right)


def lasota_yorke_check(model: FlowModel, params: TwistParams, ms: Sequence[int],
                       trials: int = 4, B: float = 1.0, depth: int = 8,
                       constant_h: bool = False,
                       seed: Optional[int] = 0) -> list[LasotaYorkeResult]:
    """
    Measured A0(m) over random pairs (h, H) with |h(v) - h(v')| <= B H(v') D(v, v').

    Args:
        model: Flow model (potential and roof)
        params: Twist offsets
        ms: Powers m to test
        trials: Random (h, H) pairs
        B: Lipschitz constant of h relative to H
        depth: Depth of the test functions (pairs are scanned exhaustively at this resolution)
        constant_h: Use h constant (B term absent) instead of random h
        seed: RNG seed

    Returns:
        One LasotaYorkeResult per m
    """
    theta = params.theta.theta
    subshift = model.subshift
    twisted = model.twisted_operator(params.a, params.b)
    markov = model.markov_operator(params.a)
    depth = max(depth, twisted.min_depth, markov.min_depth)
    index = subshift.words(depth)
    left, right = _same_symbol_pairs(index)
    lcp = common_prefix_lengths(index.words[left], index.words[right])
    dist = np.power(theta, lcp.astype(np.float64))

    rng = np.random.default_rng(seed)
    L = twisted.at_depth(depth)
    M = markov.at_depth(depth)
    best = {m: 0.0 for m in ms}
    for _ in range(trials):
        H = rng.uniform(0.5, 2.0, size=len(index))
        if constant_h:
            h = np.full(len(index), rng.uniform(0.5, 2.0) + 0j)
            b_coef = 0.0
        else:
            phi = rng.normal(size=len(index)) + 1j * rng.normal(size=len(index))
            lip = lip_seminorm_table(index, phi, theta)[0]
            h = 1.0 + B * H.min() * phi / lip
            b_coef = B
        Lh, MH, Mabs = h, H, np.abs(h)
        for m in range(1, max(ms) + 1):
            Lh, MH, Mabs = L.matrix @ Lh, M.matrix @ MH, M.matrix @ Mabs
            if m not in best:
                continue
            lhs = np.abs(Lh[left] - Lh[right])
            rhs = (b_coef * theta ** m * MH[right] + abs(params.b) * Mabs[right]) * dist
            valid = rhs > 0
            if valid.any():
                best[m] = max(best[m], float(np.max(lhs[valid] / rhs[valid])))
    results = [LasotaYorkeResult(m=m, b=params.b, a0_measured=best[m], pairs=len(left)) for m in ms]
    logger.info("Lasota-Yorke b=%g: A0 in [%.4g, %.4g] over m=%s", params.b,
                min(r.a0_measured for r in results), max(r.a0_measured for r in results), list(ms))
    return results


def lasota_yorke_growth(results: Sequence[LasotaYorkeResult]) -> float:
    """
    max_m A0(m) / A0(m_first).

    Finite-depth test functions are absorbed by L after `depth` steps, so A0(m) may fall to 0;
    a bounded constant shows up as a growth factor near or below 1.
    """
    ordered = sorted(results, key=lambda r: r.m)
    first = ordered[0].a0_measured
    if first <= 0:
        return math.inf if any(r.a0_measured > 0 for r in ordered) else 1.0
    return max(r.a0_measured for r in ordered) / first


# ============ Contraction scans ============

@dataclass(frozen=True)
class ContractionEntry:
    """Per-b contraction measurements."""
    b: float
    spectral_radius: float
    m_star: float
    gelfand: float


@dataclass
class ContractionProfile:
    """Per-b spectral radii and m_star values with the fitted m_star <= T log|b|."""
    rho: float
    a: float
    entries: list[ContractionEntry] = field(default_factory=list)
    fitted_T: float = math.nan
    r_squared: float = math.nan

    def rows(self) -> list[list]:
        return [[e.b, e.spectral_radius, e.m_star, self.fitted_T] for e in self.entries]


def _test_function_table(index: WordIndex, theta: float, b: float, random_functions: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Indicator basis plus seeded random functions, each scaled to (theta, b)-norm 1."""
    n = len(index)
    basis = np.eye(n, dtype=np.complex128)
    noise = rng.normal(size=(n, random_functions)) + 1j * rng.normal(size=(n, random_functions))
    functions = np.concatenate([basis, noise], axis=1)
    scale = b if b != 0 else 1.0
    return functions / theta_b_norm_table(index, functions, theta, scale)


def _scan_one(model: FlowModel, a: float, b: float, rho: float, basis_depth: int,
              random_functions: int, m_cap: int, gelfand_m: int, seed: int) -> ContractionEntry:
    theta = model.theta.theta
    op = model.twisted_operator(a, b)
    radius = op.at_depth(1).spectral_radius()
    matrix = op.at_depth(basis_depth)
    index = matrix.index
    rng = np.random.default_rng([seed, int(abs(b) * 1000)])
    table = _test_function_table(index, theta, b, random_functions, rng)
    norm_b = b if b != 0 else 1.0

    # ok[m-1]: every test function satisfies the rho^m bound at power m
    ok = np.zeros(m_cap, dtype=bool)
    gelfand = math.nan
    for m in range(1, m_cap + 1):
        table = matrix.matrix @ table
        norms = theta_b_norm_table(index, table, theta, norm_b)
        ok[m - 1] = bool(np.all(norms <= rho ** m * (1.0 + 1e-12)))
        if m == gelfand_m:
            gelfand = float(norms.max() ** (1.0 / m))

    failing = np.flatnonzero(~ok)
    if len(failing) == 0:
        m_star = 1.0
    elif failing[-1] == m_cap - 1:
        m_star = math.inf
    else:
        m_star = float(failing[-1] + 2)
    logger.debug("b=%g: spectral radius %.6f, m_star %s", b, radius, m_star)
    return ContractionEntry(b=b, spectral_radius=radius, m_star=m_star, gelfand=gelfand)


def fit_contraction(entries: Sequence[ContractionEntry]) -> tuple[float, float]:
    """
    Fit m_star = T log|b| through the origin over |b| >= 2 with finite m_star.

    Returns:
        (T, uncentered R^2); T is raised so that every used point satisfies the bound
    """
    used = [e for e in entries if abs(e.b) >= 2 and math.isfinite(e.m_star)]
    if not used:
        return math.nan, math.nan
    x = np.array([math.log(abs(e.b)) for e in used])
    y = np.array([e.m_star for e in used])
    t_ls = float(x @ y / (x @ x))
    r_squared = float(1.0 - np.sum((y - t_ls * x) ** 2) / np.sum(y ** 2))
    return max(t_ls, float(np.max(y / x))), r_squared


def contraction_scan(model: FlowModel, b_grid: Sequence[float], rho: Optional[float] = None,
                     a: float = 0.0, basis_depth: Optional[int] = None,
                     random_functions: Optional[int] = None, m_cap: Optional[int] = None,
                     seed: int = 0, threads: Optional[int] = None) -> ContractionProfile:
    """
    Spectral radius and m_star for every b in the grid, plus the log|b| fit.

    m_star is the smallest m such that |L_ab^k h| <= rho^k |h| for every test function h
    and every k in [m, m_cap]; the sentinel inf is recorded otherwise.
    """
    rho = TWIST_SETTINGS.rho if rho is None else rho
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    basis_depth = TWIST_SETTINGS.basis_depth if basis_depth is None else basis_depth
    random_functions = TWIST_SETTINGS.random_functions if random_functions is None else random_functions
    m_cap = TWIST_SETTINGS.m_cap if m_cap is None else m_cap
    threads = THREAD_SETTINGS.threads if threads is None else threads

    for b in b_grid:
        TwistParams(a=a, b=b, theta=model.theta)

    # Solve the Perron data once before fanning out.
    model.normalized(a)
    for b in b_grid:
        model.twisted_operator(a, b)

    def task(b: float) -> ContractionEntry:
        return _scan_one(model, a, b, rho, basis_depth, random_functions, m_cap,
                         TWIST_SETTINGS.gelfand_m, seed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(task, b_grid))
    else:
        entries = [task(b) for b in b_grid]

    profile = ContractionProfile(rho=rho, a=a, entries=entries)
    profile.fitted_T, profile.r_squared = fit_contraction(entries)
    sentinels = sum(1 for e in entries if math.isinf(e.m_star))
    if sentinels:
        logger.warning("%d of %d b values reached m_cap=%d without contraction",
                       sentinels, len(entries), m_cap)
    logger.info("contraction scan: %d b values, T=%.4g, R^2=%.4g",
                len(entries), profile.fitted_T, profile.r_squared)
    return profile


def gelfand_profile(model: FlowModel, b: float, m: int, a: float = 0.0,
                    basis_depth: Optional[int] = None, seed: int = 0) -> tuple[float, float]:
    """(max over test functions |L^m h| / |h|)^(1/m) and the block spectral radius."""
    TwistParams(a=a, b=b, theta=model.theta)
    basis_depth = TWIST_SETTINGS.basis_depth if basis_depth is None else basis_depth
    entry = _scan_one(model, a, b, 0.5, basis_depth, TWIST_SETTINGS.random_functions, m, m, seed)
    return entry.gelfand, entry.spectral_radius
