"""
Thermodynamic Formalism - transfer operators, pressure, and Gibbs measures.

A depth-k potential g acts on functions of the first d = max(k-1, 1) symbols
through a sparse block matrix T with (L_g h)(u) = sum_a e^{g(a.u)} h(a.u).
The Perron data of T gives the pressure, the eigenfunction h and the
eigenmeasure on d-cylinders; from them the normalized potential and the
Gibbs measure of every cylinder are exact finite computations.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import optimize

from config import CAPACITY, SOLVER_SETTINGS
from engine.errors import BracketFailure, CapacityError, NoConvergenceError, NonPrimitiveError
from engine.shift import lip_seminorm
from models.functions import DepthFn
from models.subshift import Subshift, ThetaParams, Word, WordIndex


logger = logging.getLogger(__name__)


# ============ Transfer matrices ============

@dataclass(frozen=True)
class TransferMatrix:
    """
    Block matrix of a Ruelle operator.

    Row u, column w' holds e^{g(a.u)} where w' = (a.u)[:d]; applying the
    matrix to the values of a depth-<=d function evaluates L_g pointwise.
    """
    index: WordIndex
    matrix: sp.csr_matrix
    potential_depth: int

    @property
    def block_depth(self) -> int:
        return self.index.depth

    @property
    def subshift(self) -> Subshift:
        return self.index.subshift

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix.data)

    def apply(self, values: np.ndarray, m: int = 1) -> np.ndarray:
        out = values
        for _ in range(m):
            out = self.matrix @ out
        return out

    def apply_fn(self, h: DepthFn, m: int = 1) -> DepthFn:
        """L^m h for a function of depth at most the block depth."""
        if h.depth > self.block_depth:
            raise ValueError(
                f"function depth {h.depth} exceeds block depth {self.block_depth}; "
                "build the matrix at a larger depth"
            )
        return DepthFn(self.index, self.apply(h.lift(self.block_depth).values, m))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.dense())

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues())))


def build_transfer(subshift: Subshift, g: DepthFn, s: complex = 0.0,
                   roof: Optional[DepthFn] = None, depth: Optional[int] = None) -> TransferMatrix:
    """
    Build the block matrix of L_{g - s*roof} (L_g when s = 0 or no roof).

    Args:
        subshift: Ambient subshift
        g: Potential (real or complex)
        s: Complex parameter multiplying the roof
        roof: Roof function folded into the potential
        depth: Minimum block depth (raised to depth(g) - 1 when smaller)

    Returns:
        TransferMatrix acting on functions of the first d symbols

    Raises:
        CapacityError: if the block-state count exceeds the configured cap
    """
    if g.subshift is not subshift:
        raise ValueError("potential lives on a different subshift")
    potential = g
    if roof is not None and s != 0:
        potential = g - s * roof

    d = max(potential.depth - 1, 1, depth or 1)
    count = subshift.word_count(d + 1)
    if count > CAPACITY.block_state_cap:
        raise CapacityError(f"transfer matrix transitions at block depth {d}", count,
                            CAPACITY.block_state_cap)

    states = subshift.words(d)
    extensions = subshift.words(d + 1).words
    rows = states.locate(extensions[:, 1:])
    cols = states.locate(extensions[:, :d])
    weights = np.exp(potential.evaluate(extensions))
    matrix = sp.csr_matrix((weights, (rows, cols)), shape=(len(states), len(states)))
    logger.debug("built transfer matrix: %d states, %d transitions, depth %d",
                 len(states), matrix.nnz, d)
    return TransferMatrix(index=states, matrix=matrix, potential_depth=potential.depth)


class RuelleOperator:
    """
    Transfer operator of a fixed potential, with block matrices cached per depth.

    Usage:
        op = RuelleOperator(f0)
        op.apply(h, m=5)    # L^5 h at depth max(depth(h), depth(f0) - 1)
    """

    def __init__(self, potential: DepthFn):
        self.potential = potential
        self._matrices: dict[int, TransferMatrix] = {}

    @property
    def subshift(self) -> Subshift:
        return self.potential.subshift

    @property
    def min_depth(self) -> int:
        return max(self.potential.depth - 1, 1)

    def at_depth(self, depth: int) -> TransferMatrix:
        depth = max(depth, self.min_depth)
        if depth not in self._matrices:
            self._matrices[depth] = build_transfer(self.subshift, self.potential, depth=depth)
        return self._matrices[depth]

    def apply(self, h: DepthFn, m: int = 1) -> DepthFn:
        matrix = self.at_depth(h.depth)
        return matrix.apply_fn(h, m)


# ============ Perron data ============

@dataclass(frozen=True)
class GibbsSolution:
    """Perron eigendata of a transfer matrix, normalized so that nu_hat(1) = 1 = nu_hat(h)."""
    lambda_: float
    h: DepthFn
    nu_hat: DepthFn
    potential: DepthFn
    P_f: Optional[float] = None
    a: float = 0.0
    iterations: int = 0
    residual: float = 0.0

    @property
    def pressure(self) -> float:
        return float(np.log(self.lambda_))


def _power_iteration(matrix: sp.spmatrix, tol: float, max_iterations: int,
                     polish: int = 20) -> tuple[float, np.ndarray, int, float]:
    n = matrix.shape[0]
    v = np.full(n, 1.0 / n)
    residual = np.inf
    for iteration in range(1, max_iterations + 1):
        w = matrix @ v
        lam = w.sum()
        residual = float(np.abs(w - lam * v).sum() / lam)
        v = w / lam
        if residual < tol:
            # a few extra sweeps push the error down to rounding level
            for _ in range(polish):
                w = matrix @ v
                lam = w.sum()
                v = w / lam
            return float(lam), v, iteration, residual
    raise NoConvergenceError(max_iterations, residual)


def rpf_solve(T: TransferMatrix, tol: Optional[float] = None,
              max_iterations: Optional[int] = None) -> GibbsSolution:
    """
    Perron root, right eigenfunction and left eigenmeasure of a real block matrix.

    Raises:
        NonPrimitiveError: if the matrix is complex or has non-positive weights
        NoConvergenceError: if power iteration stalls
    """
    tol = SOLVER_SETTINGS.residual_tol if tol is None else tol
    max_iterations = SOLVER_SETTINGS.max_iterations if max_iterations is None else max_iterations
    if T.is_complex:
        raise NonPrimitiveError("Perron solve needs a real nonnegative matrix")
    if not (T.matrix.data > 0).all():
        raise NonPrimitiveError("transfer weights underflowed to zero; the block matrix is not primitive")

    lam, right, it_right, res_right = _power_iteration(T.matrix, tol, max_iterations)
    _, left, it_left, res_left = _power_iteration(T.matrix.T.tocsr(), tol, max_iterations)

    left = left / left.sum()
    right = right / float(left @ right)
    lam = float(left @ (T.matrix @ right))
    logger.debug("rpf solve: lambda=%.15g after %d/%d iterations", lam, it_right, it_left)
    return GibbsSolution(
        lambda_=lam,
        h=DepthFn(T.index, right),
        nu_hat=DepthFn(T.index, left),
        potential=_recovered_potential(T),
        iterations=max(it_right, it_left),
        residual=max(res_right, res_left),
    )


def _recovered_potential(T: TransferMatrix) -> DepthFn:
    # g(a.u) = log T[u, w'], tabulated on (d+1)-words.
    extensions = T.subshift.words(T.block_depth + 1)
    rows = T.index.locate(extensions.words[:, 1:])
    cols = T.index.locate(extensions.words[:, :T.block_depth])
    weights = np.asarray(T.matrix[rows, cols]).ravel()
    return DepthFn(extensions, np.log(weights))


def pressure(subshift: Subshift, g: DepthFn) -> float:
    """Topological pressure log(lambda) of a real potential."""
    return rpf_solve(build_transfer(subshift, g)).pressure


def topological_entropy_sft(subshift: Subshift) -> float:
    """log of the Perron root of the transition matrix."""
    return pressure(subshift, DepthFn.constant(subshift, 0.0))


def solve_pf(f: DepthFn, tau: DepthFn, tol: Optional[float] = None) -> float:
    """
    The unique P_f with Pr(f - P_f tau) = 0.

    Bisection on [-K, K], K = |f|_0/tau_min + h_top/tau_min + 1, then secant
    refinement until |Pr| < tol.

    Raises:
        ValueError: if the roof is not strictly positive
        BracketFailure: if the bracket does not straddle zero
    """
    tol = SOLVER_SETTINGS.pressure_tol if tol is None else tol
    subshift = f.subshift
    tau_min = tau.min()
    if tau.is_complex or tau_min <= 0:
        raise ValueError(f"roof must be real and strictly positive, min is {tau_min}")

    def pr(s: float) -> float:
        return pressure(subshift, f - s * tau)

    h_top = topological_entropy_sft(subshift)
    bound = f.sup_norm() / tau_min + h_top / tau_min + 1.0
    p_lo, p_hi = pr(-bound), pr(bound)
    if not (p_lo > 0.0 > p_hi):
        raise BracketFailure(-bound, bound, p_lo, p_hi)
    logger.debug("P_f bracket [%.6g, %.6g] -> Pr = %.6g, %.6g", -bound, bound, p_lo, p_hi)

    root = optimize.bisect(pr, -bound, bound, xtol=SOLVER_SETTINGS.bisect_xtol)
    try:
        refined = optimize.newton(pr, root, x1=root + SOLVER_SETTINGS.bisect_xtol,
                                  tol=1e-15, maxiter=50)
        if -bound <= refined <= bound and abs(pr(refined)) <= abs(pr(root)):
            root = float(refined)
    except RuntimeError:
        logger.debug("secant refinement failed; falling back to Brent")
    if abs(pr(root)) >= tol:
        root = optimize.brentq(pr, -bound, bound, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    logger.info("solved P_f = %.12g (|Pr| = %.2e)", root, abs(pr(root)))
    return float(root)


def gibbs_solution(f: DepthFn, tau: DepthFn, a: float = 0.0,
                   p_f: Optional[float] = None) -> GibbsSolution:
    """Perron data of L_{f - (P_f + a) tau}."""
    p_f = solve_pf(f, tau) if p_f is None else p_f
    g = f - (p_f + a) * tau
    solution = rpf_solve(build_transfer(f.subshift, g))
    return GibbsSolution(
        lambda_=solution.lambda_, h=solution.h, nu_hat=solution.nu_hat, potential=g,
        P_f=p_f, a=a, iterations=solution.iterations, residual=solution.residual,
    )


def normalized_potential(solution: GibbsSolution) -> DepthFn:
    """g + log h - log h o sigma - log lambda, so that the operator fixes 1."""
    log_h = solution.h.log()
    return solution.potential + log_h - log_h.shifted() - np.log(solution.lambda_)


def normalize_fa(f: DepthFn, tau: DepthFn, a: float = 0.0,
                 p_f: Optional[float] = None) -> DepthFn:
    """
    The normalized potential f^(a) with M_a 1 = 1.

    Args:
        f: Potential
        tau: Roof
        a: Real offset added to P_f
        p_f: Precomputed P_f (solved when omitted)
    """
    return normalized_potential(gibbs_solution(f, tau, a, p_f))


# ============ Gibbs measures ============

class GibbsMeasure:
    """
    Shift-invariant Gibbs measure of a normalized potential f0 (L_{f0} 1 = 1).

    Cylinder masses on d-blocks come from h * nu_hat; longer cylinders follow
    nu(C[a.u]) = e^{f0(a.u)} nu(C[u]); shorter ones are sums of extensions.
    """

    def __init__(self, f0: DepthFn, block_masses: np.ndarray):
        self.f0 = f0
        self.block_depth = max(f0.depth - 1, 1)
        if f0.depth < self.block_depth + 1:
            self.f0 = f0.lift(self.block_depth + 1)
        masses = np.asarray(block_masses, dtype=np.float64)
        masses = masses / masses.sum()
        self._masses: dict[int, np.ndarray] = {self.block_depth: masses}
        self._exp_f0 = np.exp(self.f0.values)

    @classmethod
    def from_solution(cls, solution: GibbsSolution) -> "GibbsMeasure":
        # h and nu_hat live on the block depth of the normalized potential
        return cls(normalized_potential(solution), solution.h.values * solution.nu_hat.values)

    @property
    def subshift(self) -> Subshift:
        return self.f0.subshift

    def masses(self, depth: int) -> np.ndarray:
        """nu(C[w]) for every admissible word of the given length, lexicographic order."""
        if depth < 1:
            raise ValueError(f"cylinder length must be >= 1, got {depth}")
        if depth in self._masses:
            return self._masses[depth]
        d = self.block_depth
        if depth < d:
            block = self.subshift.words(d)
            out = np.add.reduceat(self._masses[d], block.prefix_starts(depth))
        else:
            shorter = self.masses(depth - 1)
            index = self.subshift.words(depth)
            tails = self.subshift.words(depth - 1).locate(index.words[:, 1:])
            heads = self.f0.index.locate(index.words[:, :d + 1])
            out = self._exp_f0[heads] * shorter[tails]
        out.setflags(write=False)
        self._masses[depth] = out
        return out

    def mass_fn(self, depth: int) -> DepthFn:
        return DepthFn(self.subshift.words(depth), self.masses(depth))

    def cylinder(self, w: Sequence[int]) -> float:
        """nu(C[w]); 0 for inadmissible words."""
        if not self.subshift.is_admissible(w):
            return 0.0
        d = self.block_depth
        if len(w) <= d:
            return float(self.masses(len(w))[self.subshift.words(len(w)).index_of(w)])
        tail = tuple(w[len(w) - d:])
        mass = float(self._masses[d][self.subshift.words(d).index_of(tail)])
        for i in range(len(w) - d - 1, -1, -1):
            mass *= float(self._exp_f0[self.f0.index.index_of(tuple(w[i:i + d + 1]))])
        return mass

    def integrate(self, F: DepthFn) -> complex | float:
        """Exact integral of a locally constant function."""
        value = np.dot(F.values, self.masses(F.depth))
        return value.item()


def gibbs_cylinder(measure: GibbsMeasure, w: Sequence[int]) -> float:
    return measure.cylinder(w)


# ============ Flow models ============

class FlowModel:
    """
    Potential f and roof tau on one subshift, with pressure data cached.

    Usage:
        model = FlowModel(f, tau, theta=0.5)
        model.p_f                  # solved once
        model.normalized(0.0)      # f^(0)
        model.measure              # Gibbs measure of f^(0)
    """

    def __init__(self, f: DepthFn, tau: DepthFn, theta: ThetaParams | float = 0.5):
        if f.subshift is not tau.subshift:
            raise ValueError("potential and roof live on different subshifts")
        if tau.is_complex or tau.min() <= 0:
            raise ValueError("roof must be real and strictly positive")
        self.f = f
        self.tau = tau
        self.theta = theta if isinstance(theta, ThetaParams) else ThetaParams(float(theta))
        self._solutions: dict[float, GibbsSolution] = {}
        self._operators: dict[tuple[float, float], RuelleOperator] = {}

    @property
    def subshift(self) -> Subshift:
        return self.f.subshift

    @property
    def tau_min(self) -> float:
        return self.tau.min()

    @property
    def tau_max(self) -> float:
        return self.tau.max()

    @cached_property
    def p_f(self) -> float:
        return solve_pf(self.f, self.tau)

    def solution(self, a: float = 0.0) -> GibbsSolution:
        if a not in self._solutions:
            self._solutions[a] = gibbs_solution(self.f, self.tau, a, self.p_f)
        return self._solutions[a]

    def normalized(self, a: float = 0.0) -> DepthFn:
        return normalized_potential(self.solution(a))

    @cached_property
    def measure(self) -> GibbsMeasure:
        return GibbsMeasure.from_solution(self.solution(0.0))

    def markov_operator(self, a: float = 0.0) -> RuelleOperator:
        """M_a = L_{f^(a)}."""
        return self.twisted_operator(a, 0.0)

    def twisted_operator(self, a: float, b: float) -> RuelleOperator:
        """L_ab = L_{f^(a) - i b tau}."""
        key = (float(a), float(b))
        if key not in self._operators:
            potential = self.normalized(a)
            if b != 0:
                potential = potential - 1j * b * self.tau
            self._operators[key] = RuelleOperator(potential)
        return self._operators[key]

    def second_eigenvalue_modulus(self) -> float:
        """rho_4: modulus of the subleading eigenvalue of the normalized block matrix."""
        eigenvalues = np.sort(np.abs(self.markov_operator(0.0).at_depth(1).eigenvalues()))[::-1]
        return float(eigenvalues[1]) if len(eigenvalues) > 1 else 0.0

    def t0_bound(self) -> float:
        """T0 = max(|f^(0)|_0, |f^(0)|_theta, |tau|_theta)."""
        f0 = self.normalized(0.0)
        return max(f0.sup_norm(), lip_seminorm(f0, self.theta), lip_seminorm(self.tau, self.theta))


# ============ Reports ============

@dataclass(frozen=True)
class GibbsEnvelope:
    """Observed Gibbs-inequality envelope for one cylinder length."""
    m: int
    c1: float
    c2: float
    min_mass: float
    max_mass: float

    @property
    def spread(self) -> float:
        return self.c2 / self.c1


def _reference_points(subshift: Subshift, words: np.ndarray, extra: int) -> np.ndarray:
    """Periodic extension of each word, or the least admissible extension when the wrap is illegal."""
    n, m = words.shape
    total = m + extra
    periodic = np.tile(words, (1, total // m + 1))[:, :total]
    wrap_ok = subshift.transition[words[:, -1], words[:, 0]] == 1
    greedy = np.empty((n, total), dtype=np.int64)
    greedy[:, :m] = words
    for i in range(m, total):
        greedy[:, i] = np.argmax(subshift.transition[greedy[:, i - 1]] == 1, axis=1)
    return np.where(wrap_ok[:, None], periodic, greedy)


def gibbs_property_report(measure: GibbsMeasure, g: DepthFn, m: int) -> tuple[float, float]:
    """
    Observed (c1, c2) with c1 <= nu(C) / e^{g_m(y)} <= c2 over all m-cylinders.

    g is shifted to zero pressure first; y is the periodic point of the word.
    """
    env = gibbs_envelope(measure, g, m)
    return env.c1, env.c2


def gibbs_table(measure: GibbsMeasure, g: DepthFn, m: int,
                g_pressure: Optional[float] = None) -> tuple[WordIndex, np.ndarray, np.ndarray]:
    """(m-words, nu(C[w]), e^{g_m(y_w)}) with g shifted to zero pressure."""
    subshift = measure.subshift
    g0 = g - (pressure(subshift, g) if g_pressure is None else g_pressure)
    index = subshift.words(m)
    y = _reference_points(subshift, index.words, g0.depth - 1)
    g_m = np.zeros(len(index))
    for i in range(m):
        g_m += g0.evaluate(y[:, i:i + g0.depth])
    return index, measure.masses(m), np.exp(g_m)


def gibbs_envelope(measure: GibbsMeasure, g: DepthFn, m: int,
                   g_pressure: Optional[float] = None) -> GibbsEnvelope:
    _, masses, e_gm = gibbs_table(measure, g, m, g_pressure)
    ratio = masses / e_gm
    return GibbsEnvelope(m=m, c1=float(ratio.min()), c2=float(ratio.max()),
                         min_mass=float(masses.min()), max_mass=float(masses.max()))


def gibbs_envelopes(measure: GibbsMeasure, g: DepthFn, m_max: int) -> tuple[list[GibbsEnvelope], float]:
    """
    Envelopes for m = 1..m_max and the growth trend of log(c2/c1) in m.

    The trend is the least-squares slope over the upper half of the depths;
    short cylinders see only part of the ratio set and sit below the plateau.
    """
    g_pressure = pressure(measure.subshift, g)
    envelopes = [gibbs_envelope(measure, g, m, g_pressure) for m in range(1, m_max + 1)]
    tail = envelopes[len(envelopes) // 2:]
    if len(tail) < 2:
        return envelopes, 0.0
    ms = np.array([e.m for e in tail], dtype=np.float64)
    spreads = np.log([e.spread for e in tail])
    return envelopes, float(np.polyfit(ms, spreads, 1)[0])


def pressure_truncation_report(subshift: Subshift, potential: Callable[[Word], float],
                               depths: Sequence[int]) -> list[tuple[int, float]]:
    """Pressure of the depth-k truncations of a potential given on finite words."""
    report = []
    for k in depths:
        g_k = DepthFn.from_callable(subshift, k, potential)
        report.append((k, pressure(subshift, g_k)))
        logger.debug("truncation depth %d: pressure %.12g", k, report[-1][1])
    return report


def eigenvalue_lipschitz_check(model: FlowModel, a_values: Sequence[float]) -> float:
    """max |lambda_a - 1| / |a| over the nonzero offsets given."""
    ratios = []
    for a in a_values:
        if a == 0:
            continue
        ratios.append(abs(model.solution(a).lambda_ - 1.0) / abs(a))
    return max(ratios) if ratios else 0.0
