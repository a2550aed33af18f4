"""
Subshifts of finite type and their admissible words.

A Subshift owns the 0/1 transition matrix and lazily materializes the
admissible words of each length as a WordIndex (lexicographically sorted
integer table with base-k0 codes for vectorized lookup).
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from config import CAPACITY
from engine.errors import CapacityError, NonPrimitiveError


Word = tuple[int, ...]


@dataclass(frozen=True)
class ThetaParams:
    """Metric parameter theta in (0, 1)."""
    theta: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")


def _mixing_power(transition: np.ndarray) -> Optional[int]:
    """Smallest M0 with transition**M0 > 0, or None if no power is positive."""
    k0 = transition.shape[0]
    pattern = transition > 0
    power = pattern.copy()
    # Wielandt bound for primitive matrices
    for m in range(1, (k0 - 1) ** 2 + 2):
        if power.all():
            return m
        power = (power.astype(np.int64) @ pattern.astype(np.int64)) > 0
    return None


@dataclass(frozen=True, eq=False)
class Subshift:
    """
    One-sided subshift of finite type over the alphabet {0, ..., k0-1}.

    Usage:
        golden = Subshift.golden_mean()
        golden.words(3).as_words()   # [(0,0,0), (0,0,1), (0,1,0), (1,0,0), (1,0,1)]
    """
    transition: np.ndarray
    mixing_power: int = field(init=False)
    _indices: dict = field(init=False, repr=False)

    def __post_init__(self):
        matrix = np.array(self.transition, dtype=np.int64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"transition must be square, got shape {matrix.shape}")
        if matrix.shape[0] < 2:
            raise ValueError("alphabet_size must be at least 2")
        if not np.isin(matrix, (0, 1)).all():
            raise ValueError("transition entries must be 0 or 1")
        if not matrix.any(axis=1).all() or not matrix.any(axis=0).all():
            raise NonPrimitiveError("every row and column of the transition matrix needs a 1")

        m0 = _mixing_power(matrix)
        if m0 is None:
            raise NonPrimitiveError("transition matrix has no strictly positive power")

        matrix.setflags(write=False)
        object.__setattr__(self, "transition", matrix)
        object.__setattr__(self, "mixing_power", m0)
        object.__setattr__(self, "_indices", {})

    # ============ Constructors ============

    @classmethod
    def full_shift(cls, k0: int = 2) -> "Subshift":
        return cls(np.ones((k0, k0), dtype=np.int64))

    @classmethod
    def golden_mean(cls) -> "Subshift":
        return cls(np.array([[1, 1], [1, 0]], dtype=np.int64))

    # ============ Words ============

    @property
    def alphabet_size(self) -> int:
        return int(self.transition.shape[0])

    def is_admissible(self, word: Sequence[int]) -> bool:
        """True if every symbol is in range and every consecutive pair is allowed."""
        if len(word) == 0:
            return False
        if any(s < 0 or s >= self.alphabet_size for s in word):
            return False
        return all(self.transition[a, b] == 1 for a, b in zip(word, word[1:]))

    def word_count(self, m: int) -> int:
        """Number of admissible words of length m (entry sum of transition^(m-1))."""
        if m < 1:
            raise ValueError(f"word length must be >= 1, got {m}")
        matrix = self.transition.astype(object)
        counts = np.ones(self.alphabet_size, dtype=object)
        for _ in range(m - 1):
            counts = matrix @ counts
        return int(sum(counts))

    def words(self, m: int, cap: Optional[int] = None) -> "WordIndex":
        """Admissible words of length m, cached per length."""
        if m < 1:
            raise ValueError(f"word length must be >= 1, got {m}")
        if m in self._indices:
            return self._indices[m]

        limit = CAPACITY.word_cap if cap is None else cap
        count = self.word_count(m)
        if count > limit:
            raise CapacityError(f"admissible words of length {m}", count, limit)
        if m * np.log2(self.alphabet_size) >= 62:
            raise CapacityError(f"word codes of length {m}", m, int(62 / np.log2(self.alphabet_size)))

        if m == 1:
            table = np.arange(self.alphabet_size, dtype=np.int64).reshape(-1, 1)
        else:
            shorter = self.words(m - 1, cap=limit).words
            allowed = self.transition[shorter[:, -1]].astype(bool)
            rows, symbols = np.nonzero(allowed)
            table = np.column_stack([shorter[rows], symbols])

        index = WordIndex(self, table)
        self._indices[m] = index
        return index

    def as_dict(self) -> dict:
        return {
            "alphabet_size": self.alphabet_size,
            "transition": self.transition.tolist(),
        }


class WordIndex:
    """
    Lexicographically sorted table of the admissible words of one length.

    Rows are words; codes are base-k0 integers of the rows, so lexicographic
    order equals numeric order of codes and lookups are a searchsorted.
    """

    def __init__(self, subshift: Subshift, table: np.ndarray):
        self.subshift = subshift
        self.words = np.ascontiguousarray(table, dtype=np.int64)
        self.words.setflags(write=False)
        self.depth = int(self.words.shape[1])
        k0 = subshift.alphabet_size
        self._powers = k0 ** np.arange(self.depth - 1, -1, -1, dtype=np.int64)
        self.codes = self.words @ self._powers
        self.codes.setflags(write=False)
        self._prefix_starts: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return int(self.words.shape[0])

    def word(self, i: int) -> Word:
        return tuple(int(s) for s in self.words[i])

    def as_words(self) -> list[Word]:
        return [tuple(int(s) for s in row) for row in self.words]

    def locate(self, table: np.ndarray) -> np.ndarray:
        """Row indices of the length-depth prefixes of table rows; -1 where inadmissible."""
        table = np.asarray(table, dtype=np.int64)
        if table.ndim == 1:
            table = table.reshape(1, -1)
        if table.shape[1] < self.depth:
            raise ValueError(f"words of length {table.shape[1]} are shorter than depth {self.depth}")
        prefixes = table[:, :self.depth]
        in_range = ((prefixes >= 0) & (prefixes < self.subshift.alphabet_size)).all(axis=1)
        codes = np.where(in_range, prefixes @ self._powers, -1)
        idx = np.searchsorted(self.codes, codes)
        idx = np.clip(idx, 0, len(self) - 1)
        found = in_range & (self.codes[idx] == codes)
        return np.where(found, idx, -1)

    def index_of(self, word: Iterable[int]) -> int:
        """Index of an admissible word of exactly this length; -1 when not admissible."""
        row = np.fromiter(word, dtype=np.int64)
        if row.shape[0] != self.depth:
            raise ValueError(f"expected a word of length {self.depth}, got {row.shape[0]}")
        return int(self.locate(row.reshape(1, -1))[0])

    def prefix_starts(self, j: int) -> np.ndarray:
        """Start rows of the groups of words sharing their first j symbols."""
        if j in self._prefix_starts:
            return self._prefix_starts[j]
        if j == 0:
            starts = np.array([0], dtype=np.int64)
        else:
            changed = np.any(self.words[1:, :j] != self.words[:-1, :j], axis=1)
            starts = np.flatnonzero(np.concatenate([[True], changed])).astype(np.int64)
        self._prefix_starts[j] = starts
        return starts
