"""
Stationary block-chain sampler for Gibbs measures.

Paths run forward in time on d-blocks: from block s the next symbol c is drawn
with probability nu(C[s.c]) / nu(C[s]), so every finite window of a sampled
path has the law of the Gibbs measure.
"""

import bisect
import logging
from typing import Optional

import numpy as np

from engine.thermo import GibbsMeasure
from models.subshift import Word


logger = logging.getLogger(__name__)


class BlockChainSampler:
    """
    Sampler for paths of the stationary chain of a Gibbs measure.

    Usage:
        sampler = BlockChainSampler(measure)
        paths = sampler.sample_paths(1000, 50, np.random.default_rng(7))
    """

    def __init__(self, measure: GibbsMeasure):
        self.measure = measure
        self.d = measure.block_depth
        subshift = measure.subshift
        self.states = subshift.words(self.d)
        self.extensions = subshift.words(self.d + 1)

        block_masses = measure.masses(self.d)
        ext_masses = measure.masses(self.d + 1)
        # Extensions of one block are contiguous in lexicographic order.
        owner = self.states.locate(self.extensions.words[:, :self.d])
        probs = ext_masses / block_masses[owner]
        starts = self.extensions.prefix_starts(self.d)
        probs = probs / np.add.reduceat(probs, starts)[owner]
        cumulative = np.cumsum(probs)
        within = cumulative - (cumulative[starts] - probs[starts])[owner]
        self._group_end = np.append(starts[1:], len(probs)) - 1
        # keys of block i fill (i, i + 1]; a uniform u selects the first key above i + u
        self._keys = owner + within
        self._keys[self._group_end] = owner[self._group_end] + 1.0
        self._next_state = self.states.locate(self.extensions.words[:, 1:])
        self._next_symbol = self.extensions.words[:, self.d]
        self._start_cdf = np.cumsum(block_masses)
        self._start_cdf /= self._start_cdf[-1]

    def _initial_states(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = np.searchsorted(self._start_cdf, rng.random(n), side="right")
        return np.minimum(idx, len(self.states) - 1)

    def _step(self, states: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        """Extension rows chosen for each current block state."""
        rows = np.searchsorted(self._keys, states + uniforms, side="right")
        group_end = self._group_end[states]
        return np.minimum(rows, group_end)

    def sample_paths(self, n: int, length: int, rng: np.random.Generator) -> np.ndarray:
        """n independent stationary paths of the given length, as an (n, length) table."""
        if length < 1:
            raise ValueError(f"path length must be >= 1, got {length}")
        states = self._initial_states(n, rng)
        head = self.states.words[states]
        if length <= self.d:
            return head[:, :length].copy()
        paths = np.empty((n, length), dtype=np.int64)
        paths[:, :self.d] = head
        for t in range(self.d, length):
            rows = self._step(states, rng.random(n))
            paths[:, t] = self._next_symbol[rows]
            states = self._next_state[rows]
        return paths

    def sample_trajectory(self, length: int, seed: Optional[int] = None) -> Word:
        """One long stationary path, stepping a single chain."""
        rng = np.random.default_rng(seed)
        state = int(self._initial_states(1, rng)[0])
        out = [int(s) for s in self.states.words[state]]
        if length <= self.d:
            return tuple(out[:length])

        keys = self._keys.tolist()
        ends = self._group_end.tolist()
        next_state = self._next_state.tolist()
        next_symbol = self._next_symbol.tolist()
        uniforms = rng.random(length - self.d).tolist()
        for u in uniforms:
            row = min(bisect.bisect_right(keys, state + u), ends[state])
            out.append(next_symbol[row])
            state = next_state[row]
        logger.debug("sampled trajectory of length %d", length)
        return tuple(out)


def sample_trajectory(measure: GibbsMeasure, length: int, seed: Optional[int] = None) -> Word:
    """Length-n admissible word drawn from the stationary chain; deterministic under seed."""
    return BlockChainSampler(measure).sample_trajectory(length, seed)
