"""
Periodic Orbits - primitive orbit enumeration, zeta functions, prime orbit counts.

Periodic points of sigma^n correspond to closed walks of length n in the block
graph, so traces of powers of the roof-twisted block matrix T_s give the
orbit sums sum_{sigma^n x = x} e^{-s tau_n(x)} without enumerating orbits.
"""

import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from config import CAPACITY
from engine.errors import CapacityError
from engine.thermo import build_transfer, solve_pf
from models.functions import DepthFn
from models.subshift import Subshift, Word


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PeriodicOrbit:
    """Primitive periodic orbit in its lexicographically least rotation."""
    word: Word
    flow_period: float

    @property
    def n(self) -> int:
        return len(self.word)


@dataclass(frozen=True)
class ZetaEval:
    """
    Truncated evaluations of the Ruelle zeta function at s.

    partial_product runs over primitive orbits of period <= n_max; log_partial is
    sum_{n <= n_max} tr(T_s^n) / n; determinant_value is 1 / det(I - T_s).
    """
    s: complex
    n_max: int
    partial_product: complex
    log_partial: complex
    determinant_value: complex
    divergent: bool


@dataclass
class PrimeOrbitTable:
    """pi(lambda) against li(e^{h_T lambda}) on a grid."""
    h_top: float
    orbits: int
    rows: list[tuple[float, int, float, float, float]] = field(default_factory=list)

    header = ("lambda", "pi", "li", "ratio", "abs_error")


# ============ Arithmetic helpers ============

def divisors(n: int) -> list[int]:
    small = [d for d in range(1, math.isqrt(n) + 1) if n % d == 0]
    return sorted(set(small + [n // d for d in small]))


def mobius(n: int) -> int:
    result, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            result = -result
        p += 1
    return -result if m > 1 else result


def fixed_point_counts(subshift: Subshift, n_max: int) -> list[int]:
    """#Fix(sigma^n) = trace(A^n) for n = 1..n_max, in exact integers."""
    A = subshift.transition.astype(object)
    power = np.identity(subshift.alphabet_size, dtype=object)
    counts = []
    for _ in range(n_max):
        power = power.dot(A)
        counts.append(int(np.trace(power)))
    return counts


def primitive_counts(subshift: Subshift, n_max: int) -> list[int]:
    """Number of primitive orbits of each period 1..n_max by Mobius inversion."""
    traces = fixed_point_counts(subshift, n_max)
    return [sum(mobius(n // d) * traces[d - 1] for d in divisors(n)) // n
            for n in range(1, n_max + 1)]


def _check_orbit_capacity(subshift: Subshift, n_max: int) -> None:
    total = sum(fixed_point_counts(subshift, n_max))
    if total > CAPACITY.orbit_cap:
        raise CapacityError(f"periodic points up to period {n_max}", total, CAPACITY.orbit_cap)


# ============ Enumeration ============

def _lyndon_words(subshift: Subshift, n: int) -> list[Word]:
    """Cyclically admissible Lyndon words of length n (FKM with admissibility pruning)."""
    A = subshift.transition
    k = subshift.alphabet_size
    out: list[Word] = []
    a = [0] * (n + 1)

    def extend(t: int, p: int) -> None:
        if t > n:
            if p == n and A[a[n], a[1]]:
                out.append(tuple(a[1:]))
            return
        start = a[t - p]
        for symbol in range(start, k):
            if t > 1 and not A[a[t - 1], symbol]:
                continue
            a[t] = symbol
            extend(t + 1, p if symbol == start else t)

    extend(1, 1)
    return out


def flow_periods(words: list[Word], roof: DepthFn) -> np.ndarray:
    """tau_n at the periodic point of each word (roof read on the cyclic extension)."""
    if not words:
        return np.zeros(0)
    n = len(words[0])
    table = np.asarray(words, dtype=np.int64)
    reps = (roof.depth - 1) // n + 2
    cyclic = np.tile(table, (1, reps))
    total = np.zeros(len(words))
    for i in range(n):
        total += roof.evaluate(cyclic[:, i:i + roof.depth])
    return total


def primitive_orbits(subshift: Subshift, n_max: int, roof: Optional[DepthFn] = None) -> list[PeriodicOrbit]:
    """
    One representative per primitive orbit of period <= n_max.

    Args:
        subshift: Ambient subshift
        n_max: Largest symbolic period
        roof: Roof for flow periods (tau = 1 when omitted)

    Raises:
        CapacityError: if the total number of periodic points exceeds the orbit cap
    """
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    _check_orbit_capacity(subshift, n_max)
    roof = DepthFn.constant(subshift, 1.0) if roof is None else roof
    orbits: list[PeriodicOrbit] = []
    for n in range(1, n_max + 1):
        words = _lyndon_words(subshift, n)
        periods = flow_periods(words, roof)
        orbits.extend(PeriodicOrbit(w, float(p)) for w, p in zip(words, periods))
        logger.debug("period %d: %d primitive orbits", n, len(words))
    logger.info("enumerated %d primitive orbits up to period %d", len(orbits), n_max)
    return orbits


def top_entropy(subshift: Subshift, tau: DepthFn) -> float:
    """h_T: the root of s -> Pr(-s tau)."""
    return solve_pf(DepthFn.constant(subshift, 0.0), tau)


# ============ Zeta function ============

def _zeta_matrix(subshift: Subshift, roof: DepthFn, s: complex) -> np.ndarray:
    zero = DepthFn.constant(subshift, 0.0)
    return build_transfer(subshift, zero, s=s, roof=roof).dense().astype(np.complex128)


def _traces(matrix: np.ndarray, n_max: int) -> np.ndarray:
    out = np.empty(n_max, dtype=np.complex128)
    power = np.identity(matrix.shape[0], dtype=np.complex128)
    for n in range(n_max):
        power = power @ matrix
        out[n] = np.trace(power)
    return out


def zeta_eval(subshift: Subshift, roof: DepthFn, s: complex, n_max: int,
              k_max: int = 10_000) -> ZetaEval:
    """
    Truncated zeta function values at s.

    The primitive product uses Z_n(s) = (1/n) sum_{e | n} mu(e) tr(T_{es}^{n/e}) and
    log prod (1 - e^{-s l})^{-1} = sum_k Z_n(k s) / k; it is only formed for Re s > 0.
    Divergence (spectral radius of T_{Re s} >= 1) is flagged, not raised.
    """
    s = complex(s)
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    base = _zeta_matrix(subshift, roof, s)
    log_partial = complex(np.sum(_traces(base, n_max) / np.arange(1, n_max + 1)))

    radius = float(np.max(np.abs(np.linalg.eigvals(_zeta_matrix(subshift, roof, s.real)))))
    divergent = radius >= 1.0
    det = complex(np.linalg.det(np.identity(base.shape[0]) - base))
    determinant_value = complex(np.inf) if det == 0 else 1.0 / det

    if s.real <= 0:
        partial_product = complex(math.nan, math.nan)
    else:
        # e^{-k Re(s) tau_min} below machine precision ends the series in k
        stop = min(k_max, math.ceil(40.0 / (s.real * roof.min())) + 1)
        log_product = 0j
        cache: dict[int, np.ndarray] = {}
        for k in range(1, stop + 1):
            for n in range(1, n_max + 1):
                z_n = 0j
                for e in divisors(n):
                    mu = mobius(e)
                    if mu == 0:
                        continue
                    scale = k * e
                    if scale not in cache:
                        cache[scale] = _traces(_zeta_matrix(subshift, roof, scale * s), n_max)
                    z_n += mu * cache[scale][n // e - 1]
                log_product += z_n / (n * k)
        partial_product = cmath.exp(log_product)

    if divergent:
        logger.warning("zeta at s=%s: spectral radius %.6g >= 1, truncations do not converge",
                       s, radius)
    logger.info("zeta(%s) truncated at n_max=%d: product %s, determinant %s",
                s, n_max, partial_product, determinant_value)
    return ZetaEval(s=s, n_max=n_max, partial_product=partial_product,
                    log_partial=log_partial,
                    determinant_value=determinant_value, divergent=divergent)


def log_sum_from_orbits(orbits: list[PeriodicOrbit], s: complex, n_max: int) -> complex:
    """sum over orbits gamma and k with k |gamma| <= n_max of e^{-s k l(gamma)} / k."""
    total = 0j
    for orbit in orbits:
        for k in range(1, n_max // orbit.n + 1):
            total += cmath.exp(-s * k * orbit.flow_period) / k
    return total


# ============ Prime orbit counting ============

def li(x: float) -> float:
    """Logarithmic integral from 2."""
    if x == 2.0:
        return 0.0
    value, _ = integrate.quad(lambda u: 1.0 / math.log(u), 2.0, x, epsabs=1e-8, limit=200)
    return float(value)


def prime_orbit_count(roof: DepthFn, lambda_max: float, steps: int) -> PrimeOrbitTable:
    """
    pi(lambda) = #{primitive orbits with flow period <= lambda} on a uniform grid.

    Raises:
        CapacityError: if enumerating periods up to lambda_max / tau_min is too large
    """
    if lambda_max <= 0 or steps < 1:
        raise ValueError(f"need lambda_max > 0 and steps >= 1, got {lambda_max}, {steps}")
    subshift = roof.subshift
    n_max = max(1, int(math.floor(lambda_max / roof.min() + 1e-12)))
    orbits = primitive_orbits(subshift, n_max, roof)
    periods = np.sort([o.flow_period for o in orbits])
    h_top = top_entropy(subshift, roof)

    table = PrimeOrbitTable(h_top=h_top, orbits=len(orbits))
    for k in range(1, steps + 1):
        lam = lambda_max * k / steps
        pi = int(np.searchsorted(periods, lam + 1e-12, side="right"))
        x = math.exp(h_top * lam)
        li_value = li(x) if x > 2.0 else math.nan
        ratio = pi / li_value if li_value > 0 else math.nan
        table.rows.append((lam, pi, li_value, ratio, abs(ratio - 1.0)))
    logger.info("prime orbit count up to lambda=%g: pi=%d, h_T=%.6f",
                lambda_max, table.rows[-1][1], h_top)
    return table
