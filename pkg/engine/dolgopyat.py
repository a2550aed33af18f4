"""
Dolgopyat Lab - cylinder families, damping, contraction operators N_J and their checks.

A family at frequency b covers the shift by the cylinders C'_m of all
admissible s-words (theta^s |b| in (theta, 1]). Inside each C'_m, sub-cylinders
of a common co-length are paired; two sigma^N-preimage branches with extremal
tau_N separate every pair in time. The damping function
omega_J = 1 - mu0 * chi(branch images of the chosen sub-cylinders) defines
N_J h = M_a^N(omega_J h). All integrals are exact cylinder sums.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from config import DOLGOPYAT_SETTINGS
from engine.errors import FlatRoofError, NonPositiveError, SeparationFailure
from engine.shift import common_prefix_lengths
from engine.thermo import FlowModel
from models.functions import DepthFn
from models.subshift import Word


logger = logging.getLogger(__name__)


# ============ Constant ledger ============

def ledger_rates(mu0: float, gamma2: float, N: int, T0: float, C10: float,
                 D1: float) -> tuple[float, float, float]:
    """
    (a0, rho3, S0) from the contraction-rate formulas.

    a0 = mu0 gamma2 e^{-N T0} / (32 C10 D1 N T0),
    rho3 = e^{a0 N T0} / (1 + mu0 e^{-N T0} / C10), S0 = e^{a0 N T0}.
    """
    if T0 <= 0 or N < 1:
        raise ValueError(f"need T0 > 0 and N >= 1, got T0={T0}, N={N}")
    a0 = mu0 * gamma2 * math.exp(-N * T0) / (32.0 * C10 * D1 * N * T0)
    S0 = math.exp(a0 * N * T0)
    rho3 = S0 / (1.0 + mu0 * math.exp(-N * T0) / C10)
    return a0, rho3, S0


@dataclass(frozen=True)
class ConstantLedger:
    """
    Every constant used by the contraction estimates, with its numeric value.

    Family-dependent entries (d3, d4 and everything built from C10) are NaN
    until with_family_constants() is called.

    Usage:
        ledger = ConstantLedger.for_model(model, N=4)
        family = build_family(model, 16.0, ledger)
        ledger = ledger.with_family_constants(family.d3, family.d4)
    """
    theta: float
    N: int
    delta1: float
    eps3: float
    mu0: float
    gamma2: float
    T0: float
    D1: float
    D2: float
    E: float
    eps2: float
    C6: float
    rho4: float
    beta3: float
    beta: float
    r: float
    s_exp: float = 2.0
    d3: float = math.nan
    d4: float = math.nan
    C10: float = math.nan
    a0: float = math.nan
    rho3: float = math.nan
    S0: float = math.nan
    k_tilde: float = math.nan

    @classmethod
    def for_model(cls, model: FlowModel, N: Optional[int] = None, delta1: Optional[float] = None,
                  eps3: Optional[float] = None, E: Optional[float] = None,
                  s_exp: float = 2.0, gamma2: float = 0.5) -> "ConstantLedger":
        N = DOLGOPYAT_SETTINGS.block_length if N is None else N
        delta1 = DOLGOPYAT_SETTINGS.delta1 if delta1 is None else delta1
        eps3 = DOLGOPYAT_SETTINGS.eps3 if eps3 is None else eps3
        if N < 1 or delta1 <= 0 or eps3 <= 0:
            raise ValueError(f"need N >= 1, delta1 > 0, eps3 > 0; got {N}, {delta1}, {eps3}")
        if s_exp <= 1:
            raise ValueError(f"decay exponent s must exceed 1, got {s_exp}")
        theta = model.theta.theta
        T0 = model.t0_bound()
        if E is None:
            E = max(1.0, 3.0 * T0 * math.exp(T0 / (1.0 - theta)) / (1.0 - theta))
        rho4 = model.second_eigenvalue_modulus()
        beta3 = 1.0 if rho4 == 0 else min(1.0, -math.log(rho4))
        beta = min(max(rho4, math.exp(-1.0)), 1.0 - 1e-9)
        return cls(
            theta=theta, N=N, delta1=delta1, eps3=eps3,
            mu0=min(0.25, (1.0 - math.cos(eps3)) / 20.0),
            gamma2=gamma2, T0=T0,
            D1=2.0 / math.log(1.0 / theta), D2=math.log(1.0 / theta),
            E=E, eps2=theta, C6=1.0 / theta,
            rho4=rho4, beta3=beta3, beta=beta, r=min(1.0, -math.log(beta)), s_exp=s_exp,
        )

    def with_family_constants(self, d3: float, d4: float) -> "ConstantLedger":
        C10 = max(8.0, 16.0 * d3 * self.E ** 2 / d4)
        a0, rho3, S0 = ledger_rates(self.mu0, self.gamma2, self.N, self.T0, C10, self.D1)
        k_tilde = (32.0 * self.s_exp * C10 * self.D1 * math.exp(self.N * self.T0)
                   / (self.mu0 * self.gamma2 ** 2 * self.r * self.beta3))
        return replace(self, d3=d3, d4=d4, C10=C10, a0=a0, rho3=rho3, S0=S0, k_tilde=k_tilde)

    def iterations(self, b: float) -> int:
        """M = ceil(k_tilde log|b|)."""
        if math.isnan(self.k_tilde):
            raise ValueError("ledger has no family constants yet")
        return int(math.ceil(self.k_tilde * math.log(abs(b))))

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


# ============ Families ============

@dataclass(frozen=True)
class FamilyPair:
    """Sub-cylinder pair (Gamma_1j, Gamma_2j) of one C'_m and its temporal gap."""
    j: int
    gamma: tuple[Word, Word]
    masses: tuple[float, float]
    gap: float


@dataclass(frozen=True)
class DolgopyatFamily:
    """
    Cylinders C'_m, branch pairs, separated sub-cylinder pairs, representative set J
    and damping omega_J at one frequency b.
    """
    model: FlowModel
    b: float
    N: int
    s: int
    colength: int
    mu0: float
    delta1: float
    cylinders: list[Word]
    cylinder_masses: list[float]
    branches: list[tuple[Word, Word]]
    pairs: list[list[FamilyPair]]
    d3: float
    d4: float
    branch_index: int = 1
    J: tuple[tuple[int, int, int], ...] = ()
    omega: Optional[DepthFn] = field(default=None, compare=False)

    @property
    def gamma_length(self) -> int:
        return self.s + self.colength

    @property
    def depth(self) -> int:
        """Depth of omega_J: an N-branch followed by a sub-cylinder."""
        return self.N + self.gamma_length

    @property
    def delta(self) -> float:
        """Smallest accepted gap in units of theta^s."""
        gaps = [p.gap for pairs in self.pairs for p in pairs]
        return min(gaps) / self.model.theta.theta ** self.s

    def gamma_word(self, i: int, m: int, j: int) -> Word:
        pair = next(p for p in self.pairs[m] if p.j == j)
        return pair.gamma[i - 1]

    def gamma_mass(self, i: int, m: int, j: int) -> float:
        pair = next(p for p in self.pairs[m] if p.j == j)
        return pair.masses[i - 1]

    def w_j_words(self) -> list[Word]:
        """Words of the sub-cylinders making up W_J."""
        return [self.gamma_word(i, m, j) for i, m, j in self.J]

    def with_branch(self, i: int) -> "DolgopyatFamily":
        """The same family with J rebuilt on branch i."""
        J = _representative_set(self, i)
        return replace(self, branch_index=i, J=J, omega=_damping(self, J))

    def without_damping(self) -> "DolgopyatFamily":
        """Degenerate copy with empty J and omega = 1."""
        return replace(self, J=(), omega=DepthFn.constant(self.model.subshift, 1.0, self.depth))


def _roof_sums(model: FlowModel, words: np.ndarray, N: int) -> np.ndarray:
    """tau_N on the rows of a word table (rows long enough to cover the roof depth)."""
    tau = model.tau
    total = np.zeros(len(words))
    for i in range(N):
        total += tau.evaluate(words[:, i:i + tau.depth])
    return total


def _representative_set(family: DolgopyatFamily, i: int) -> tuple[tuple[int, int, int], ...]:
    """Greedy J on branch i until the mass share reaches d4 / (4 d3) in every C'_m."""
    if i not in (1, 2):
        raise ValueError(f"branch index must be 1 or 2, got {i}")
    target = family.d4 / (4.0 * family.d3)
    chosen = []
    for m, pairs in enumerate(family.pairs):
        total = 0.0
        for pair in pairs:
            if total >= target * family.cylinder_masses[m]:
                break
            chosen.append((i, m, pair.j))
            total += pair.masses[i - 1]
    return tuple(chosen)


def _damping(family: DolgopyatFamily, J: Sequence[tuple[int, int, int]]) -> DepthFn:
    subshift = family.model.subshift
    if not J:
        return DepthFn.constant(subshift, 1.0, family.depth)
    images = [family.branches[m][i - 1] + family.gamma_word(i, m, j) for i, m, j in J]
    return 1.0 - family.mu0 * DepthFn.indicator(subshift, images)


def _pairs_at_colength(model: FlowModel, N: int, s: int, c: int):
    """Branches and all candidate pairs of every C'_m at co-length c; None if some C'_m is too thin."""
    subshift = model.subshift
    A = subshift.transition
    children = subshift.words(s + c)
    starts = np.append(children.prefix_starts(s), len(children))
    prefixes = subshift.words(N).words
    masses = model.measure.masses(s + c)
    out = []
    for m in range(len(starts) - 1):
        kids = children.words[starts[m]:starts[m + 1]]
        if len(kids) < 2:
            return None
        valid = prefixes[A[prefixes[:, -1], kids[0, 0]] == 1]
        head = np.column_stack([valid, np.repeat(kids[:1], len(valid), axis=0)])
        ranking = _roof_sums(model, head, N)
        v1 = tuple(int(x) for x in valid[int(np.argmax(ranking))])
        v2 = tuple(int(x) for x in valid[int(np.argmin(ranking))])
        spread = float(ranking.max() - ranking.min())

        pairs = []
        for j in range(len(kids) // 2):
            g1, g2 = kids[2 * j], kids[2 * j + 1]
            t1 = _roof_sums(model, np.concatenate([v1, g1]).reshape(1, -1), N)[0]
            t2 = _roof_sums(model, np.concatenate([v2, g2]).reshape(1, -1), N)[0]
            row = starts[m] + 2 * j
            pairs.append(FamilyPair(
                j=j,
                gamma=(tuple(int(x) for x in g1), tuple(int(x) for x in g2)),
                masses=(float(masses[row]), float(masses[row + 1])),
                gap=float(abs(t1 - t2)),
            ))
        out.append(((v1, v2), spread, pairs))
    return out


def build_family(model: FlowModel, b: float, ledger: ConstantLedger,
                 max_colength: Optional[int] = None) -> DolgopyatFamily:
    """
    Build the scale-|b| family with separated pairs and J on branch 1.

    s is the smallest length with theta^s |b| <= 1. When |b| < 1/theta the
    rounding can push s above D1 log|b|; the family is still built, a warning
    is logged and verify_family reports lengths=False.

    Args:
        model: Flow model
        b: Frequency, |b| >= e^2
        ledger: Constants (N, delta1, mu0 are used here)
        max_colength: Largest sub-cylinder co-length searched

    Raises:
        FlatRoofError: if every branch pair has identical tau_N
        SeparationFailure: if some C'_m has no pair with gap >= delta1 theta^s
    """
    if abs(b) < math.e ** 2:
        raise ValueError(f"families need |b| >= e^2, got {b}")
    max_colength = DOLGOPYAT_SETTINGS.max_colength if max_colength is None else max_colength
    theta = model.theta.theta
    N = ledger.N
    s = int(math.ceil(math.log(abs(b)) / math.log(1.0 / theta) - 1e-9))
    if s > ledger.D1 * math.log(abs(b)) + 1e-9:
        logger.warning("family length s=%d exceeds D1 log|b|=%.4g at b=%g (needs |b| >= 1/theta)",
                       s, ledger.D1 * math.log(abs(b)), b)
    threshold = ledger.delta1 * theta ** s
    c_min = max(1, model.tau.depth - 1 - s)

    best_c, best_score, best_layout = None, -math.inf, None
    flat, searched = True, False
    for c in range(c_min, max(c_min, max_colength) + 1):
        layout = _pairs_at_colength(model, N, s, c)
        if layout is None:
            continue
        searched = True
        if any(spread > 0 for _, spread, _ in layout):
            flat = False
        score = min(max((p.gap for p in pairs), default=0.0) for _, _, pairs in layout)
        logger.debug("co-length %d: worst best-gap %.6g (threshold %.6g)", c, score, threshold)
        if score > best_score * (1.0 + 1e-12):
            best_c, best_score, best_layout = c, score, layout
    if not searched:
        raise SeparationFailure("no co-length gives two sub-cylinders in every C'_m", 0.0)
    if flat:
        raise FlatRoofError(f"roof sums tau_{N} agree on all branches at b={b}")

    accepted = [[p for p in pairs if p.gap >= threshold] for _, _, pairs in best_layout]
    cylinders = model.subshift.words(s).as_words()
    for m, pairs in enumerate(accepted):
        if not pairs:
            raise SeparationFailure(
                f"cylinder {cylinders[m]} has no pair separated by delta1 * theta^{s}",
                best_delta=best_score / theta ** s, cylinder=cylinders[m],
            )

    cylinder_masses = [float(x) for x in model.measure.masses(s)]
    ratios, shares = [], []
    for m, pairs in enumerate(accepted):
        masses = [x for p in pairs for x in p.masses]
        ratios.append(max(masses) / min(masses))
        shares.append(sum(p.masses[0] for p in pairs) / cylinder_masses[m])

    family = DolgopyatFamily(
        model=model, b=b, N=N, s=s, colength=best_c, mu0=ledger.mu0, delta1=ledger.delta1,
        cylinders=cylinders, cylinder_masses=cylinder_masses,
        branches=[branch for branch, _, _ in best_layout], pairs=accepted,
        d3=max(ratios), d4=min(shares),
    )
    family = family.with_branch(1)
    logger.info("family at b=%g: s=%d, co-length %d, %d cylinders, |J|=%d, delta=%.4g",
                b, s, best_c, len(cylinders), len(family.J), family.delta)
    return family


# ============ Metric and cone ============

def _gamma_flags(family: DolgopyatFamily, words: np.ndarray) -> np.ndarray:
    """flags[u, q]: some W_J sub-cylinder starts at a position p <= q of word u."""
    L = family.gamma_length
    k0 = family.model.subshift.alphabet_size
    targets = np.array(sorted({
        int(np.dot(w, k0 ** np.arange(L - 1, -1, -1))) for w in family.w_j_words()
    }), dtype=np.int64)
    width = words.shape[1] - L + 1
    if width <= 0 or len(targets) == 0:
        return np.zeros((len(words), max(width, 1)), dtype=bool)
    powers = k0 ** np.arange(L - 1, -1, -1, dtype=np.int64)
    hits = np.column_stack([np.isin(words[:, p:p + L] @ powers, targets) for p in range(width)])
    return np.logical_or.accumulate(hits, axis=1)


def metric_d_table(family: DolgopyatFamily, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """
    D(u, u') for row pairs of two word tables of one length.

    0 for equal words; theta^(lcp - L) when a W_J sub-cylinder (length L) sits
    inside the common prefix Y(u, u'); 1 otherwise.
    """
    theta = family.model.theta.theta
    L = family.gamma_length
    lcp = common_prefix_lengths(left, right)
    flags = _gamma_flags(family, left)
    q = np.clip(lcp - L, 0, flags.shape[1] - 1)
    inside = (lcp >= L) & flags[np.arange(len(left)), q]
    out = np.where(inside, np.power(theta, (lcp - L).astype(np.float64)), 1.0)
    out[lcp == left.shape[1]] = 0.0
    return out


def metric_d(u: Sequence[int], u_prime: Sequence[int], family: DolgopyatFamily) -> float:
    if len(u) != len(u_prime):
        raise ValueError(f"metric compares words of equal length, got {len(u)} and {len(u_prime)}")
    left = np.asarray(u, dtype=np.int64).reshape(1, -1)
    right = np.asarray(u_prime, dtype=np.int64).reshape(1, -1)
    return float(metric_d_table(family, left, right)[0])


def _same_cylinder_pairs(family: DolgopyatFamily, depth: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ordered pairs of distinct depth-words sharing one C'_m, with the word table."""
    index = family.model.subshift.words(depth)
    starts = np.append(index.prefix_starts(family.s), len(index))
    left, right = [], []
    for lo, hi in zip(starts[:-1], starts[1:]):
        rows = np.arange(lo, hi)
        i, j = np.meshgrid(rows, rows, indexing="ij")
        mask = i != j
        left.append(i[mask])
        right.append(j[mask])
    return index.words, np.concatenate(left), np.concatenate(right)


@dataclass(frozen=True)
class _ConePairs:
    """Same-cylinder pairs at one depth with their D distances."""
    left: np.ndarray
    right: np.ndarray
    dist: np.ndarray

    def max_ratio(self, values: np.ndarray) -> float:
        if len(self.left) == 0:
            return 0.0
        ratio = np.abs(values[self.left] - values[self.right]) / values[self.right]
        return float(np.max(ratio / self.dist))


def _cone_pairs(family: DolgopyatFamily, depth: int,
                cache: Optional[dict[int, _ConePairs]] = None) -> _ConePairs:
    if cache is not None and depth in cache:
        return cache[depth]
    words, left, right = _same_cylinder_pairs(family, depth)
    dist = metric_d_table(family, words[left], words[right])
    pairs = _ConePairs(left=left, right=right, dist=dist)
    if cache is not None:
        cache[depth] = pairs
    return pairs


def _cone_constant(H: DepthFn, family: DolgopyatFamily,
                   cache: Optional[dict[int, _ConePairs]] = None) -> float:
    if H.is_complex or H.min() <= 0:
        raise NonPositiveError("cone members must be real and strictly positive")
    depth = max(H.depth, family.gamma_length)
    return _cone_pairs(family, depth, cache).max_ratio(H.lift(depth).values)


def cone_constant(H: DepthFn, family: DolgopyatFamily) -> float:
    """Smallest E with |H(u) - H(u')| / H(u') <= E D(u, u') over pairs inside one C'_m."""
    return _cone_constant(H, family)


def cone_ke_test(H: DepthFn, family: DolgopyatFamily, E: float) -> bool:
    """
    H in K_E, tested exhaustively on pairs inside a common C'_m.

    Raises:
        NonPositiveError: if H is not strictly positive
    """
    return cone_constant(H, family) <= E * (1.0 + 1e-12)


def random_cone_members(family: DolgopyatFamily, E: float, count: int,
                        rng: np.random.Generator,
                        constant_every: int = 10) -> list[DepthFn]:
    """
    Random members of K_E.

    Most members are H = exp(c g) with g uniform on [-1, 1] over the sub-cylinder
    words and c solved so the cone constant of H is uniform in [0.1 E, 0.95 E].
    Every `constant_every`-th member is constant on each C'_m (cone constant 0).
    """
    if E <= 0 or count < 0:
        raise ValueError(f"need E > 0 and count >= 0, got E={E}, count={count}")
    subshift = family.model.subshift
    index = subshift.words(family.gamma_length)
    pairs = _cone_pairs(family, family.gamma_length)
    members = []
    for k in range(count):
        if len(pairs.left) == 0 or (constant_every > 0 and k % constant_every == constant_every - 1):
            members.append(DepthFn(subshift.words(family.s),
                                   np.exp(rng.uniform(-0.5, 0.5, len(family.cylinders)))))
            continue
        g = rng.uniform(-1.0, 1.0, len(index))
        target = rng.uniform(0.1, 0.95) * E

        def excess(c: float) -> float:
            return pairs.max_ratio(np.exp(c * g)) - target

        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
        c = optimize.brentq(excess, 0.0, hi, xtol=1e-14)
        members.append(DepthFn(index, np.exp(c * g)))
    return members


# ============ Contraction operators ============

def _markov(family: DolgopyatFamily, a: float, depth: int):
    return family.model.markov_operator(a).at_depth(depth)


def apply_nj(h: DepthFn, family: DolgopyatFamily, a: float = 0.0) -> DepthFn:
    """N_J h = M_a^N(omega_J h), tabulated at depth max(depth(omega_J), depth(h))."""
    omega = family.omega
    depth = max(omega.depth, h.depth)
    matrix = _markov(family, a, depth)
    values = matrix.apply((omega.lift(matrix.block_depth) * h.lift(matrix.block_depth)).values,
                          family.N)
    return DepthFn(matrix.index, values)


def cone_closure_check(family: DolgopyatFamily, E: float, members: Sequence[DepthFn],
                       a: float = 0.0) -> tuple[int, int]:
    """(tested, passed) for H in K_E implying N_J H in K_E."""
    cache: dict[int, _ConePairs] = {}
    bound = E * (1.0 + 1e-12)
    tested = passed = 0
    for H in members:
        if _cone_constant(H, family, cache) > bound:
            continue
        tested += 1
        passed += int(_cone_constant(apply_nj(H, family, a), family, cache) <= bound)
    return tested, passed


def preimage_metric_check(family: DolgopyatFamily, extra: int = 2) -> tuple[int, int]:
    """
    D(v.u, v.u') <= theta^N D(u, u') over pairs with D(u, u') < 1 and all N-branches v.

    Returns:
        (pairs checked, violations)
    """
    theta = family.model.theta.theta
    subshift = family.model.subshift
    A = subshift.transition
    index = subshift.words(family.gamma_length + extra)
    n = len(index)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    keep = i != j
    i, j = i[keep], j[keep]
    base = metric_d_table(family, index.words[i], index.words[j])
    close = base < 1.0
    i, j, base = i[close], j[close], base[close]
    checked = violations = 0
    for v in subshift.words(family.N).words:
        ok = A[v[-1], index.words[i, 0]] == 1
        if not ok.any():
            continue
        head = np.repeat(v.reshape(1, -1), int(ok.sum()), axis=0)
        left = np.column_stack([head, index.words[i[ok]]])
        right = np.column_stack([head, index.words[j[ok]]])
        lifted = metric_d_table(family, left, right)
        checked += len(lifted)
        violations += int(np.sum(lifted > theta ** family.N * base[ok] * (1.0 + 1e-12)))
    return checked, violations


# ============ Inequality checks ============

@dataclass(frozen=True)
class DampingReport:
    """Exact integrals and verdicts for the damping inequalities."""
    int_vb: float
    int_wj: float
    mass_bound_holds: bool
    contraction_lhs: float
    contraction_rhs: float
    contraction_holds: bool
    cauchy_schwarz_holds: bool
    square_chain_holds: bool
    damped_max: float
    damped_bound: float

    @property
    def mass_ratio(self) -> float:
        return self.int_vb / self.int_wj if self.int_wj > 0 else math.inf

    @property
    def all_hold(self) -> bool:
        return (self.mass_bound_holds and self.contraction_holds
                and self.cauchy_schwarz_holds and self.square_chain_holds
                and self.damped_max <= self.damped_bound)


def damping_checks(H: DepthFn, family: DolgopyatFamily, ledger: ConstantLedger,
                   a: float = 0.0, tol: float = 1e-12) -> DampingReport:
    """
    Check the mass inequality, the contraction of int (N_J H)^2, the pointwise
    Cauchy-Schwarz chain and the (M H)^2 <= M H^2 <= e^{a0 N T0} L^N H^2 chain.

    Raises:
        ValueError: if J is empty
        NonPositiveError: if H is not strictly positive
    """
    if not family.J:
        raise ValueError("J must be representative (nonempty)")
    if H.is_complex or H.min() <= 0:
        raise NonPositiveError("H must be strictly positive")
    if math.isnan(ledger.C10):
        ledger = ledger.with_family_constants(family.d3, family.d4)

    measure = family.model.measure
    N = family.N
    depth = max(family.depth, H.depth)
    Ma = _markov(family, a, depth)
    M0 = _markov(family, 0.0, depth)
    depth = Ma.block_depth
    masses = measure.masses(depth)

    h = H.lift(depth).values
    omega = family.omega.lift(depth).values
    w_j = DepthFn.indicator(family.model.subshift, family.w_j_words()).lift(depth).values

    int_vb = float(masses @ h ** 2)
    int_wj = float(masses @ (w_j * h ** 2))

    nj = Ma.apply(omega * h, N)
    m_h2 = Ma.apply(h ** 2, N)
    m_w2 = Ma.apply(omega ** 2, N)
    m_w = Ma.apply(omega, N)
    l0_h2 = M0.apply(h ** 2, N)
    m_h = Ma.apply(h, N)
    slack = 1.0 + tol

    contraction_lhs = float(masses @ nj ** 2)
    contraction_rhs = float(ledger.rho3 * (masses @ l0_h2))
    cauchy_schwarz_holds = bool(np.all(nj ** 2 <= m_w2 * m_h2 * slack)
                                and np.all(m_w2 * m_h2 <= m_w * m_h2 * slack)
                                and np.all(m_w * m_h2 <= m_h2 * slack))
    square_chain_holds = bool(np.all(m_h ** 2 <= m_h2 * slack)
                              and np.all(m_h2 <= math.exp(ledger.a0 * N * ledger.T0) * l0_h2 * slack))

    on_wj = m_w[w_j > 0]
    damped_max = float(on_wj.max()) if len(on_wj) else 0.0

    report = DampingReport(
        int_vb=int_vb, int_wj=int_wj, mass_bound_holds=int_vb <= ledger.C10 * int_wj * slack,
        contraction_lhs=contraction_lhs, contraction_rhs=contraction_rhs,
        contraction_holds=contraction_lhs <= contraction_rhs * slack,
        cauchy_schwarz_holds=cauchy_schwarz_holds, square_chain_holds=square_chain_holds,
        damped_max=damped_max, damped_bound=1.0 - family.mu0 * math.exp(-N * ledger.T0) + tol,
    )
    logger.debug("damping checks: mass=%s contraction=%s cauchy-schwarz=%s squares=%s",
                 report.mass_bound_holds, report.contraction_holds,
                 report.cauchy_schwarz_holds, report.square_chain_holds)
    return report


@dataclass
class DecayCurve:
    """int (H^(r))^2 dnu for r = 0..steps under alternating representative sets."""
    values: list[float]
    required_steps: int
    bound: float
    capped: bool

    @property
    def final(self) -> float:
        return self.values[-1]

    @property
    def below_bound(self) -> bool:
        return self.final <= self.bound


def iterate_nj(family: DolgopyatFamily, ledger: ConstantLedger, a: float = 0.0,
               steps: Optional[int] = None, alternate: bool = True) -> DecayCurve:
    """
    H^(0) = 1, H^(r+1) = N_{J_r} H^(r); J_r alternates between branches 1 and 2.

    Args:
        family: Family (its J is used for every step when alternate is False)
        ledger: Ledger; M = ceil(k_tilde log|b|) steps are requested
        a: Twist offset of the Markov operator
        steps: Explicit step count (overrides M)
        alternate: Alternate the branch index between steps
    """
    if math.isnan(ledger.k_tilde):
        ledger = ledger.with_family_constants(family.d3, family.d4)
    required = ledger.iterations(family.b)
    target = required if steps is None else steps
    capped = target > DOLGOPYAT_SETTINGS.iterate_cap
    count = min(target, DOLGOPYAT_SETTINGS.iterate_cap)
    if capped:
        logger.warning("iterating %d of %d required N_J steps (iterate cap)", count, target)

    if not family.J:
        sequence = [family]
    elif alternate:
        sequence = [family.with_branch(1), family.with_branch(2)]
    else:
        sequence = [family]

    depth = max(family.depth, family.model.markov_operator(a).min_depth)
    matrix = _markov(family, a, depth)
    masses = family.model.measure.masses(matrix.block_depth)
    omegas = [f.omega.lift(matrix.block_depth).values for f in sequence]

    H = np.ones(len(masses))
    values = [float(masses @ H ** 2)]
    for r in range(count):
        H = matrix.apply(omegas[r % len(omegas)] * H, family.N)
        values.append(float(masses @ H ** 2))

    bound = 2.0 / abs(family.b) ** (8.0 * ledger.s_exp)
    logger.info("N_J iteration: %d steps, final %.6g (bound %.3g)", count, values[-1], bound)
    return DecayCurve(values=values, required_steps=required, bound=bound, capped=capped)


# ============ Verification ============

@dataclass(frozen=True)
class FamilyChecks:
    """Direct re-verification of every family invariant."""
    lengths: bool
    diameters: bool
    separation: bool
    balance: bool
    representative: bool
    omega_range: bool
    delta: float

    @property
    def all_hold(self) -> bool:
        return (self.lengths and self.diameters and self.separation and self.balance
                and self.representative and self.omega_range)


def verify_family(family: DolgopyatFamily, ledger: ConstantLedger) -> FamilyChecks:
    theta = family.model.theta.theta
    log_b = math.log(abs(family.b))
    scale = theta ** family.s * abs(family.b)
    threshold = family.delta1 * theta ** family.s

    separation = all(p.gap >= threshold for pairs in family.pairs for p in pairs)
    balance = all(
        max(x for p in pairs for x in p.masses) / min(x for p in pairs for x in p.masses)
        <= family.d3 * (1.0 + 1e-12)
        for pairs in family.pairs
    )

    seen: set[tuple[int, int]] = set()
    unique = True
    totals = [0.0] * len(family.cylinders)
    for i, m, j in family.J:
        unique &= (m, j) not in seen
        seen.add((m, j))
        totals[m] += family.gamma_mass(i, m, j)
    target = family.d4 / (4.0 * family.d3)
    covered = all(totals[m] >= target * family.cylinder_masses[m] * (1.0 - 1e-12)
                  for m in range(len(family.cylinders)))

    omega = family.omega
    omega_range = (0.5 <= 1.0 - family.mu0 and omega.min() >= 1.0 - family.mu0 - 1e-15
                   and omega.max() <= 1.0)
    return FamilyChecks(
        lengths=log_b / ledger.D2 <= family.s + 1e-9 and family.s <= ledger.D1 * log_b + 1e-9,
        diameters=ledger.eps2 - 1e-12 <= scale <= ledger.C6 + 1e-12,
        separation=separation, balance=balance,
        representative=unique and covered, omega_range=omega_range,
        delta=family.delta,
    )
