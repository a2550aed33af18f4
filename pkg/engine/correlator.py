"""
Correlator - suspension semiflow sampling, correlation curves and decay fits.

A point of the suspension is (x, s) with 0 <= s < tau(x); flowing for time t
adds t to s and moves x forward one symbol each time s passes the roof.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from config import CORRELATION_SETTINGS, THREAD_SETTINGS
from engine.sampler import BlockChainSampler
from engine.thermo import GibbsMeasure, RuelleOperator
from models.functions import DepthFn, Profile


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuspensionObservable:
    """A(x, s) = base(x) * profile(s / tau(x))."""
    base: DepthFn
    profile: Profile = field(default_factory=Profile.constant)

    def evaluate(self, words: np.ndarray, s: np.ndarray, tau_values: np.ndarray) -> np.ndarray:
        return self.base.evaluate(words[:, :self.base.depth]) * self.profile(s / tau_values)


@dataclass
class SuspensionSample:
    """Paths x (one row per point), fiber coordinates s and roof values tau(x)."""
    paths: np.ndarray
    s: np.ndarray
    tau0: np.ndarray

    def __len__(self) -> int:
        return len(self.s)


@dataclass(frozen=True)
class DecayFit:
    """|rho(t)| ~ C e^{-c t} over the window |rho| > k SE."""
    c: float
    C: float
    ci: tuple[float, float]
    points: int
    accepted: bool


@dataclass
class CorrelationCurve:
    """Monte Carlo correlation estimates with jackknife standard errors."""
    t: np.ndarray
    rho: np.ndarray
    se: np.ndarray
    samples: int
    fit: Optional[DecayFit] = None

    def rows(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(r), float(e)) for t, r, e in zip(self.t, self.rho, self.se)]


# ============ Sampling ============

def suspension_measure_sample(measure: GibbsMeasure, tau: DepthFn, n: int,
                              seed: Optional[int] = None, length: Optional[int] = None,
                              rng: Optional[np.random.Generator] = None) -> SuspensionSample:
    """
    n points of the suspension measure (nu x ds) / int tau dnu.

    x is drawn from the stationary chain and kept with probability tau(x) / max tau;
    s is uniform on [0, tau(x)).
    """
    if n < 1:
        raise ValueError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed) if rng is None else rng
    length = max(tau.depth, length or 1)
    sampler = BlockChainSampler(measure)
    tau_max = tau.max()

    kept_paths, kept_tau = [], []
    needed = n
    while needed > 0:
        batch = max(64, int(needed * tau_max / tau.min() * 1.1) + 1)
        paths = sampler.sample_paths(batch, length, rng)
        values = tau.evaluate(paths[:, :tau.depth])
        keep = rng.random(batch) * tau_max < values
        kept_paths.append(paths[keep][:needed])
        kept_tau.append(values[keep][:needed])
        needed -= len(kept_tau[-1])

    paths = np.concatenate(kept_paths)
    tau0 = np.concatenate(kept_tau)
    s = rng.random(n) * tau0
    return SuspensionSample(paths=paths, s=s, tau0=tau0)


def _kahan_cumsum(values: np.ndarray) -> np.ndarray:
    """Row-wise compensated running sums with a leading zero column."""
    rows, cols = values.shape
    out = np.zeros((rows, cols + 1))
    total = np.zeros(rows)
    comp = np.zeros(rows)
    for i in range(cols):
        y = values[:, i] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[:, i + 1] = total
    return out


def _roof_along(tau: DepthFn, paths: np.ndarray) -> np.ndarray:
    steps = paths.shape[1] - tau.depth + 1
    return np.column_stack([tau.evaluate(paths[:, i:i + tau.depth]) for i in range(steps)])


# ============ Monte Carlo correlations ============

def _chunk_sums(A: SuspensionObservable, B: SuspensionObservable, measure: GibbsMeasure,
                tau: DepthFn, t_grid: np.ndarray, n: int, length: int,
                rng: np.random.Generator, blocks: np.ndarray, n_blocks: int):
    sample = suspension_measure_sample(measure, tau, n, length=length, rng=rng)
    paths = sample.paths
    a_values = A.evaluate(paths, sample.s, sample.tau0)

    roofs = _roof_along(tau, paths)
    times = _kahan_cumsum(roofs)
    width = max(B.base.depth, tau.depth)
    rows = np.arange(n)

    s_a = np.bincount(blocks, weights=a_values, minlength=n_blocks)
    s_b = np.zeros((n_blocks, len(t_grid)))
    s_ab = np.zeros((n_blocks, len(t_grid)))
    for k, t in enumerate(t_grid):
        u = sample.s + t
        # number of roof crossings: largest j with T_j <= u
        j = np.sum(times <= u[:, None], axis=1) - 1
        if np.any(j + width > paths.shape[1]):
            raise RuntimeError("sampled paths are too short for the time grid")
        window = paths[rows[:, None], j[:, None] + np.arange(width)]
        tau_j = roofs[rows, j]
        b_values = B.evaluate(window, u - times[rows, j], tau_j)
        s_b[:, k] = np.bincount(blocks, weights=b_values, minlength=n_blocks)
        s_ab[:, k] = np.bincount(blocks, weights=a_values * b_values, minlength=n_blocks)
    counts = np.bincount(blocks, minlength=n_blocks).astype(np.float64)
    return counts, s_a, s_b, s_ab


def _jackknife(counts: np.ndarray, s_a: np.ndarray, s_b: np.ndarray,
               s_ab: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    total = counts.sum()
    rho = s_ab.sum(axis=0) / total - (s_a.sum() / total) * (s_b.sum(axis=0) / total)
    used = counts > 0
    g = int(used.sum())
    if g < 2:
        return rho, np.full_like(rho, np.nan)
    rest = total - counts[used]
    loo = ((s_ab.sum(axis=0) - s_ab[used]) / rest[:, None]
           - ((s_a.sum() - s_a[used]) / rest)[:, None] * (s_b.sum(axis=0) - s_b[used]) / rest[:, None])
    se = np.sqrt((g - 1) / g * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return rho, se


def correlation(A: SuspensionObservable, B: SuspensionObservable, measure: GibbsMeasure,
                tau: DepthFn, t_grid: Sequence[float], n_samples: int,
                seed: Optional[int] = 0, chunk_size: Optional[int] = None,
                threads: Optional[int] = None, fit: bool = True) -> CorrelationCurve:
    """
    rho(t) = int A . (B o phi_t) dm - int A dm int B dm, estimated by Monte Carlo.

    Samples are processed in chunks, each with its own child RNG stream of the
    seed, so the estimate does not depend on the thread count.
    """
    t_grid = np.asarray(t_grid, dtype=np.float64)
    if np.any(t_grid < 0):
        raise ValueError("correlation times must be nonnegative")
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples, got {n_samples}")
    chunk_size = CORRELATION_SETTINGS.chunk_size if chunk_size is None else chunk_size
    threads = THREAD_SETTINGS.threads if threads is None else threads
    n_blocks = min(CORRELATION_SETTINGS.jackknife_blocks, n_samples)

    length = (int(math.ceil((t_grid.max() + tau.max()) / tau.min()))
              + max(A.base.depth, B.base.depth, tau.depth) + 2)
    n_chunks = int(math.ceil(n_samples / chunk_size))
    streams = np.random.SeedSequence(seed).spawn(n_chunks)

    def task(c: int):
        lo = c * chunk_size
        hi = min(n_samples, lo + chunk_size)
        blocks = (np.arange(lo, hi) * n_blocks) // n_samples
        return _chunk_sums(A, B, measure, tau, t_grid, hi - lo, length,
                           np.random.default_rng(streams[c]), blocks, n_blocks)

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(task, range(n_chunks)))
    else:
        parts = [task(c) for c in range(n_chunks)]

    counts = sum(p[0] for p in parts)
    s_a = sum(p[1] for p in parts)
    s_b = sum(p[2] for p in parts)
    s_ab = sum(p[3] for p in parts)
    rho, se = _jackknife(counts, s_a, s_b, s_ab)
    curve = CorrelationCurve(t=t_grid, rho=rho, se=se, samples=n_samples)
    if fit:
        curve.fit = fit_decay(curve)
    logger.info("correlation over %d times from %d samples in %d chunks",
                len(t_grid), n_samples, n_chunks)
    return curve


def fit_decay(curve: CorrelationCurve, sigmas: Optional[float] = None,
              level: Optional[float] = None) -> DecayFit:
    """
    Least squares of log|rho| against t over the window |rho| > sigmas * SE.

    The fit is accepted with at least 3 points, c > 0 and a CI for c excluding 0.
    """
    sigmas = CORRELATION_SETTINGS.window_sigmas if sigmas is None else sigmas
    level = CORRELATION_SETTINGS.ci_level if level is None else level
    window = np.abs(curve.rho) > sigmas * curve.se
    t = curve.t[window]
    y = np.log(np.abs(curve.rho[window]))
    if len(t) < 3 or np.ptp(t) == 0:
        return DecayFit(c=math.nan, C=math.nan, ci=(math.nan, math.nan), points=len(t),
                        accepted=False)
    result = stats.linregress(t, y)
    half = stats.t.ppf(0.5 + level / 2.0, len(t) - 2) * result.stderr
    c = -float(result.slope)
    ci = (c - half, c + half)
    accepted = c > 0 and ci[0] > 0
    logger.debug("decay fit over %d points: c=%.4g CI=(%.4g, %.4g)", len(t), c, *ci)
    return DecayFit(c=c, C=float(math.exp(result.intercept)), ci=ci, points=len(t),
                    accepted=accepted)


# ============ Exact references ============

def exact_zero_lag(A: SuspensionObservable, B: SuspensionObservable, measure: GibbsMeasure,
                   tau: DepthFn) -> float:
    """int A B dm - int A dm int B dm for the suspension measure."""
    mean_tau = measure.integrate(tau)
    int_a = measure.integrate(A.base * tau) * A.profile.integral() / mean_tau
    int_b = measure.integrate(B.base * tau) * B.profile.integral() / mean_tau
    int_ab = measure.integrate(A.base * B.base * tau) * A.profile.inner(B.profile) / mean_tau
    return float(int_ab - int_a * int_b)


def exact_base_correlation(measure: GibbsMeasure, A: DepthFn, B: DepthFn, n: int) -> float:
    """int A (B o sigma^n) dnu - int A int B, as int (L^n A) B dnu with the normalized operator."""
    if n < 0:
        raise ValueError(f"lag must be >= 0, got {n}")
    transported = RuelleOperator(measure.f0).apply(A, n) if n > 0 else A
    return float(measure.integrate(transported * B) - measure.integrate(A) * measure.integrate(B))


def subleading_modulus(measure: GibbsMeasure) -> float:
    eigenvalues = np.sort(np.abs(RuelleOperator(measure.f0).at_depth(1).eigenvalues()))[::-1]
    return float(eigenvalues[1]) if len(eigenvalues) > 1 else 0.0


@dataclass
class BaseCorrelationReport:
    """Exact base-map correlations rho(n), rho4 and C11 = max |rho(n)| / rho4^n."""
    values: list[float]
    rho4: float
    C11: float


def base_correlation_profile(measure: GibbsMeasure, A: DepthFn, B: DepthFn,
                             n_max: int) -> BaseCorrelationReport:
    operator = RuelleOperator(measure.f0)
    mean = measure.integrate(A) * measure.integrate(B)
    values = []
    current = A
    for n in range(n_max + 1):
        if n > 0:
            current = operator.apply(current, 1)
        values.append(float(measure.integrate(current * B) - mean))
    rho4 = subleading_modulus(measure)
    if rho4 > 0:
        C11 = max(abs(v) / rho4 ** n for n, v in enumerate(values))
    else:
        C11 = abs(values[0])
    return BaseCorrelationReport(values=values, rho4=rho4, C11=C11)
