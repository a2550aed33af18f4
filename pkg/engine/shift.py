"""
Shift Core - words, cylinder metrics, and Lipschitz seminorms.

All metrics are evaluated on finite cylinder representatives; two words are
compared through their longest common prefix.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from models.functions import DepthFn
from models.subshift import Subshift, ThetaParams, Word, WordIndex


logger = logging.getLogger(__name__)


def _theta_value(theta: ThetaParams | float) -> float:
    return theta.theta if isinstance(theta, ThetaParams) else ThetaParams(float(theta)).theta


def enumerate_words(subshift: Subshift, m: int, cap: Optional[int] = None) -> list[Word]:
    """
    Admissible words of length m in lexicographic order.

    Raises:
        CapacityError: if the count exceeds the word cap
    """
    return subshift.words(m, cap=cap).as_words()


def common_prefix_length(x: Sequence[int], y: Sequence[int]) -> int:
    n = 0
    for a, b in zip(x, y):
        if a != b:
            break
        n += 1
    return n


def common_prefix_lengths(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise longest common prefix of two equally shaped word tables."""
    differ = a != b
    any_diff = differ.any(axis=1)
    first = np.argmax(differ, axis=1)
    return np.where(any_diff, first, a.shape[1])


def d_theta(x: Sequence[int], y: Sequence[int], theta: ThetaParams | float) -> float:
    """
    Cylinder metric on words of equal length.

    Returns:
        0 if x == y, 1 if the first symbols differ, theta**lcp otherwise
    """
    if len(x) != len(y):
        raise ValueError(f"d_theta compares words of equal length, got {len(x)} and {len(y)}")
    if tuple(x) == tuple(y):
        return 0.0
    n = common_prefix_length(x, y)
    if n == 0:
        return 1.0
    return _theta_value(theta) ** n


def d_theta_table(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    """Vectorized d_theta for the row pairs of two word tables."""
    lcp = common_prefix_lengths(a, b)
    out = np.power(theta, lcp.astype(np.float64))
    out[lcp == 0] = 1.0
    out[lcp == a.shape[1]] = 0.0
    return out


def _real_spread(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return np.maximum.reduceat(values, starts, axis=0) - np.minimum.reduceat(values, starts, axis=0)


def _complex_spread(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-group diameter of complex values, groups given by start rows."""
    n = values.shape[0]
    sizes = np.diff(np.append(starts, n))
    best = np.zeros(values.shape[1])
    for size in np.unique(sizes):
        if size < 2:
            continue
        group_starts = starts[sizes == size]
        block = values[group_starts[:, None] + np.arange(size)]
        for offset in range(1, size):
            gaps = np.abs(block[:, offset:] - block[:, :-offset])
            best = np.maximum(best, gaps.max(axis=(0, 1)))
    return best


def lip_seminorm_table(index: WordIndex, values: np.ndarray, theta: float) -> np.ndarray:
    """
    |h|_theta for each column of a (words x functions) table.

    Max over prefix-tree nodes at depth j < k of (spread below the node) / theta**j;
    the root groups every word, which covers pairs with different first symbols.
    """
    table = values.reshape(values.shape[0], -1)
    is_complex = np.iscomplexobj(table)
    result = np.zeros(table.shape[1])
    for j in range(index.depth):
        starts = index.prefix_starts(j)
        if is_complex:
            spread = _complex_spread(table, starts)
        else:
            spread = _real_spread(table, starts).max(axis=0)
        result = np.maximum(result, spread / theta ** j)
    return result


def lip_seminorm(h: DepthFn, theta: ThetaParams | float) -> float:
    """Exact Lipschitz seminorm sup |h(x) - h(y)| / D_theta(x, y) of a DepthFn."""
    value = float(lip_seminorm_table(h.index, h.values, _theta_value(theta))[0])
    logger.debug("lip seminorm of depth-%d function: %.6g", h.depth, value)
    return value


def lip_seminorm_bruteforce(h: DepthFn, theta: ThetaParams | float) -> float:
    """Pairwise maximum over all word pairs; reference for the tree formula."""
    t = _theta_value(theta)
    words = h.index.words
    n = len(words)
    i, j = np.triu_indices(n, k=1)
    if len(i) == 0:
        return 0.0
    dist = d_theta_table(words[i], words[j], t)
    return float(np.max(np.abs(h.values[i] - h.values[j]) / dist))


def preimages(subshift: Subshift, w: Sequence[int]) -> list[Word]:
    """All admissible one-symbol extensions a.w, in lexicographic order."""
    if not subshift.is_admissible(w):
        raise ValueError(f"word {tuple(w)} is not admissible")
    return [(a, *w) for a in range(subshift.alphabet_size) if subshift.transition[a, w[0]] == 1]


def least_extension(subshift: Subshift, w: Sequence[int], length: int) -> Word:
    """The lexicographically least admissible word of the given length starting with w."""
    if not subshift.is_admissible(w):
        raise ValueError(f"word {tuple(w)} is not admissible")
    word = list(w)
    while len(word) < length:
        word.append(int(np.argmax(subshift.transition[word[-1]] == 1)))
    return tuple(word[:max(length, len(w))])
