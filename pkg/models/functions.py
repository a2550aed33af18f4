"""
Locally constant functions on a subshift.

DepthFn is the finite-dimensional stand-in for a Lipschitz function on the
one-sided shift: a value for every admissible word of a fixed depth, read off
the first `depth` symbols of any longer word. Profile is a piecewise
polynomial on [0, 1) used for the fiber coordinate of suspension observables.
"""

from typing import Callable, Mapping, Sequence, Union

import numpy as np
from numpy.polynomial import polynomial as P

from models.subshift import Subshift, Word, WordIndex


Number = Union[int, float, complex]


class DepthFn:
    """
    Real or complex function determined by the first `depth` symbols.

    Usage:
        shift = Subshift.full_shift(2)
        tau = DepthFn.first_symbol(shift, [1.0, 2 ** 0.5])
        tau((1, 0, 1))      # 1.414...
        (tau * 2).lift(3)   # same function tabulated on 3-words
    """

    __slots__ = ("index", "values")

    def __init__(self, index: WordIndex, values: Sequence[Number] | np.ndarray):
        arr = np.array(values)
        if arr.shape != (len(index),):
            raise ValueError(
                f"expected {len(index)} values for depth {index.depth}, got shape {arr.shape}"
            )
        arr = arr.astype(np.complex128 if np.iscomplexobj(arr) else np.float64)
        arr.setflags(write=False)
        self.index = index
        self.values = arr

    # ============ Constructors ============

    @classmethod
    def constant(cls, subshift: Subshift, value: Number, depth: int = 1) -> "DepthFn":
        index = subshift.words(depth)
        return cls(index, np.full(len(index), value))

    @classmethod
    def first_symbol(cls, subshift: Subshift, values: Sequence[Number]) -> "DepthFn":
        if len(values) != subshift.alphabet_size:
            raise ValueError(
                f"first-symbol table needs {subshift.alphabet_size} values, got {len(values)}"
            )
        return cls(subshift.words(1), np.asarray(values))

    @classmethod
    def from_table(cls, subshift: Subshift, depth: int, table: Mapping[Word, Number]) -> "DepthFn":
        """Tabulated function; the table must cover every admissible word of the depth."""
        index = subshift.words(depth)
        missing = [w for w in index.as_words() if w not in table]
        if missing:
            raise ValueError(f"table is missing {len(missing)} admissible words, e.g. {missing[0]}")
        extra = [w for w in table if index.index_of(w) < 0]
        if extra:
            raise ValueError(f"table has inadmissible word {extra[0]}")
        return cls(index, np.array([table[w] for w in index.as_words()]))

    @classmethod
    def from_callable(cls, subshift: Subshift, depth: int,
                      func: Callable[[Word], Number]) -> "DepthFn":
        index = subshift.words(depth)
        return cls(index, np.array([func(w) for w in index.as_words()]))

    @classmethod
    def indicator(cls, subshift: Subshift, words: Sequence[Word]) -> "DepthFn":
        """Indicator of a union of cylinders of one common length."""
        lengths = {len(w) for w in words}
        if len(lengths) != 1:
            raise ValueError("indicator cylinders must share one length")
        index = subshift.words(lengths.pop())
        values = np.zeros(len(index))
        rows = index.locate(np.array(words, dtype=np.int64))
        if (rows < 0).any():
            raise ValueError("indicator cylinders must be admissible")
        values[rows] = 1.0
        return cls(index, values)

    # ============ Properties ============

    @property
    def subshift(self) -> Subshift:
        return self.index.subshift

    @property
    def depth(self) -> int:
        return self.index.depth

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def __repr__(self) -> str:
        kind = "complex" if self.is_complex else "real"
        return f"DepthFn(depth={self.depth}, {kind}, n={len(self.values)})"

    # ============ Evaluation ============

    def __call__(self, word: Sequence[int]) -> Number:
        if len(word) < self.depth:
            raise ValueError(f"word of length {len(word)} is shorter than depth {self.depth}")
        row = self.index.index_of(tuple(word[:self.depth]))
        if row < 0:
            raise ValueError(f"word {tuple(word)} is not admissible")
        return self.values[row].item()

    def evaluate(self, table: np.ndarray) -> np.ndarray:
        """Vectorized evaluation on rows of an integer word table."""
        rows = self.index.locate(table)
        if (rows < 0).any():
            raise ValueError("evaluate() received inadmissible words")
        return self.values[rows]

    def lift(self, depth: int) -> "DepthFn":
        """Same function tabulated on admissible words of a larger depth."""
        if depth == self.depth:
            return self
        if depth < self.depth:
            raise ValueError(f"cannot lift depth {self.depth} down to {depth}")
        index = self.subshift.words(depth)
        return DepthFn(index, self.evaluate(index.words))

    def shifted(self) -> "DepthFn":
        """h o sigma, tabulated at depth + 1."""
        index = self.subshift.words(self.depth + 1)
        return DepthFn(index, self.evaluate(index.words[:, 1:]))

    def birkhoff_sum(self, n: int) -> "DepthFn":
        """S_n h = sum_{i<n} h o sigma^i, tabulated at depth + n - 1."""
        if n < 1:
            raise ValueError(f"Birkhoff sum length must be >= 1, got {n}")
        index = self.subshift.words(self.depth + n - 1)
        total = np.zeros(len(index), dtype=self.values.dtype)
        for i in range(n):
            total = total + self.evaluate(index.words[:, i:])
        return DepthFn(index, total)

    def table(self) -> dict[Word, Number]:
        return {w: v.item() for w, v in zip(self.index.as_words(), self.values)}

    # ============ Arithmetic ============

    def _aligned(self, other: "DepthFn") -> tuple[np.ndarray, np.ndarray, WordIndex]:
        if other.subshift is not self.subshift:
            raise ValueError("functions live on different subshifts")
        depth = max(self.depth, other.depth)
        a, b = self.lift(depth), other.lift(depth)
        return a.values, b.values, a.index

    def _combine(self, other, op) -> "DepthFn":
        if isinstance(other, DepthFn):
            a, b, index = self._aligned(other)
            return DepthFn(index, op(a, b))
        return DepthFn(self.index, op(self.values, other))

    def __add__(self, other) -> "DepthFn":
        return self._combine(other, np.add)

    def __radd__(self, other) -> "DepthFn":
        return self._combine(other, np.add)

    def __sub__(self, other) -> "DepthFn":
        return self._combine(other, np.subtract)

    def __rsub__(self, other) -> "DepthFn":
        return DepthFn(self.index, other - self.values)

    def __mul__(self, other) -> "DepthFn":
        return self._combine(other, np.multiply)

    def __rmul__(self, other) -> "DepthFn":
        return self._combine(other, np.multiply)

    def __truediv__(self, other) -> "DepthFn":
        return self._combine(other, np.divide)

    def __neg__(self) -> "DepthFn":
        return DepthFn(self.index, -self.values)

    def __abs__(self) -> "DepthFn":
        return DepthFn(self.index, np.abs(self.values))

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "DepthFn":
        return DepthFn(self.index, func(self.values))

    def exp(self) -> "DepthFn":
        return self.map(np.exp)

    def log(self) -> "DepthFn":
        if self.is_complex or (self.values <= 0).any():
            raise ValueError("log() needs a strictly positive real function")
        return self.map(np.log)

    @property
    def real(self) -> "DepthFn":
        return DepthFn(self.index, self.values.real)

    def conj(self) -> "DepthFn":
        return DepthFn(self.index, np.conj(self.values))

    # ============ Norms ============

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def min(self) -> float:
        return float(np.min(self.values.real))

    def max(self) -> float:
        return float(np.max(self.values.real))

    def is_constant(self, atol: float = 0.0) -> bool:
        return bool(np.ptp(self.values.real) <= atol and np.ptp(self.values.imag) <= atol)

    def allclose(self, other: "DepthFn", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        a, b, _ = self._aligned(other)
        return bool(np.allclose(a, b, atol=atol, rtol=rtol))


class Profile:
    """
    Piecewise polynomial on [0, 1) with at most eight pieces.

    Coefficients are in ascending powers of the fiber fraction u = s / tau(x).
    """

    MAX_PIECES = 8

    def __init__(self, breaks: Sequence[float], coefficients: Sequence[Sequence[float]]):
        edges = np.asarray(breaks, dtype=np.float64)
        if edges.ndim != 1 or len(edges) < 2:
            raise ValueError("profile breaks need at least two entries")
        if edges[0] != 0.0 or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("profile breaks must increase from 0 to 1")
        if len(coefficients) != len(edges) - 1:
            raise ValueError(
                f"{len(edges) - 1} pieces need {len(edges) - 1} coefficient lists, "
                f"got {len(coefficients)}"
            )
        if len(coefficients) > self.MAX_PIECES:
            raise ValueError(f"a profile has at most {self.MAX_PIECES} pieces")
        self.breaks = edges
        self.coefficients = [np.asarray(c, dtype=np.float64) for c in coefficients]

    @classmethod
    def constant(cls, value: float = 1.0) -> "Profile":
        return cls([0.0, 1.0], [[value]])

    @property
    def is_constant_one(self) -> bool:
        return len(self.coefficients) == 1 and np.array_equal(self.coefficients[0], [1.0])

    def __call__(self, u: np.ndarray | float) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        piece = np.clip(np.searchsorted(self.breaks, u, side="right") - 1,
                        0, len(self.coefficients) - 1)
        out = np.zeros_like(u)
        for i, coef in enumerate(self.coefficients):
            mask = piece == i
            if np.any(mask):
                out[mask] = P.polyval(u[mask], coef)
        return out

    def integral(self) -> float:
        """Exact integral over [0, 1]."""
        total = 0.0
        for lo, hi, coef in zip(self.breaks[:-1], self.breaks[1:], self.coefficients):
            antider = P.polyint(coef)
            total += P.polyval(hi, antider) - P.polyval(lo, antider)
        return float(total)

    def _piece_at(self, u: float) -> np.ndarray:
        i = int(np.clip(np.searchsorted(self.breaks, u, side="right") - 1,
                        0, len(self.coefficients) - 1))
        return self.coefficients[i]

    def inner(self, other: "Profile") -> float:
        """Exact integral over [0, 1] of self * other."""
        edges = np.union1d(self.breaks, other.breaks)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            antider = P.polyint(P.polymul(self._piece_at(mid), other._piece_at(mid)))
            total += P.polyval(hi, antider) - P.polyval(lo, antider)
        return float(total)

    def as_dict(self) -> dict:
        return {
            "breaks": self.breaks.tolist(),
            "coefficients": [c.tolist() for c in self.coefficients],
        }
