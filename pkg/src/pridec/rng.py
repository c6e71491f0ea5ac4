"""Deterministic, counter-based random streams.

Every stochastic component of the package draws from a Philox-backed
generator whose key is derived from a 64-bit master seed and a tuple of
labels (run id, role, round index) through a splitmix64 chain.  Streams
for distinct label tuples are independent, and the derivation does not
depend on evaluation order, so concurrent runs can never reorder draws.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, (z ^ (z >> 31)) & _MASK64


def derive_seed(master: int, *labels: object) -> int:
    """Fold labels into a 64-bit sub-seed of ``master``.

    Integer labels are folded directly; any other label is folded through
    the 64-bit FNV-1a hash of its repr, so strings like "env" or "learner"
    give stable cross-platform results.
    """
    state = master & _MASK64
    for label in labels:
        if isinstance(label, (int, np.integer)):
            word = int(label) & _MASK64
        else:
            word = _fnv1a64(repr(label))
        state, out = splitmix64(state ^ word)
        state ^= out
    state, out = splitmix64(state)
    return out


def _fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


def stream(master: int, *labels: object) -> np.random.Generator:
    """Independent Philox stream for the given (master, labels) address."""
    return np.random.Generator(np.random.Philox(key=derive_seed(master, *labels)))


def unit(master: int, *labels: object) -> float:
    """One uniform double in [0, 1) addressed by (master, labels).

    Cheap per-round randomness for environments: no generator object is
    built, so the cost is a few splitmix steps, and the draw for a given
    address never depends on evaluation order.
    """
    return (derive_seed(master, *labels) >> 11) * (1.0 / (1 << 53))
