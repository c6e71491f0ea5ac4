"""Finite probability spaces and the divergences used by every solver.

All distributions here are probability vectors over an explicitly labeled
finite space.  Logarithms are natural throughout, with the convention
0*log(0) = 0.  Types are immutable after construction and every operation
is pure, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import AbsoluteContinuityError, RangeError, SpaceMismatch

# Sums further than this from 1 are rejected; closer ones are renormalized.
_SUM_TOL = 1e-9
_BISECT_TOL = 1e-12


@dataclass(frozen=True)
class FiniteSpace:
    """An ordered finite set of distinct labels; indexing is positional."""

    labels: tuple

    def __init__(self, labels: Iterable):
        labels = tuple(labels)
        if not labels:
            raise RangeError("a finite space needs at least one label")
        if len(set(labels)) != len(labels):
            raise RangeError("space labels must be distinct")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SpaceMismatch(f"label {label!r} not in space") from None

    def __repr__(self) -> str:
        return f"FiniteSpace({list(self.labels)!r})"


def _require_same_space(a, b) -> None:
    if a.space != b.space:
        raise SpaceMismatch(f"operands live on different spaces: {a.space} vs {b.space}")


@dataclass(frozen=True)
class FiniteDist:
    """A probability vector over a FiniteSpace.

    Construction accepts mass vectors whose sum deviates from 1 by at most
    1e-9 (they are renormalized); larger deviations raise RangeError so
    that ill-posed inputs never reach the LP layer.
    """

    space: FiniteSpace
    mass: np.ndarray = field(repr=False)

    def __init__(self, space: FiniteSpace, mass: Sequence[float]):
        vec = np.asarray(mass, dtype=float)
        if vec.shape != (len(space),):
            raise SpaceMismatch(
                f"mass vector has length {vec.shape}, space has {len(space)} labels"
            )
        if np.any(vec < 0):
            if np.min(vec) < -_SUM_TOL:
                raise RangeError(f"negative probability mass: {vec.min()}")
            vec = np.clip(vec, 0.0, None)
        total = float(vec.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise RangeError(f"mass sums to {total}, not 1")
        vec = vec / total
        vec.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "mass", vec)

    @staticmethod
    def point(space: FiniteSpace, label) -> "FiniteDist":
        vec = np.zeros(len(space))
        vec[space.index(label)] = 1.0
        return FiniteDist(space, vec)

    @staticmethod
    def uniform(space: FiniteSpace) -> "FiniteDist":
        return FiniteDist(space, np.full(len(space), 1.0 / len(space)))

    def __getitem__(self, label) -> float:
        return float(self.mass[self.space.index(label)])

    def expect(self, values: Sequence[float]) -> float:
        return float(np.dot(self.mass, np.asarray(values, dtype=float)))

    def sample(self, rng: np.random.Generator):
        idx = int(rng.choice(len(self.space), p=self.mass))
        return self.space.labels[idx]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FiniteDist)
            and self.space == other.space
            and np.array_equal(self.mass, other.mass)
        )

    def __repr__(self) -> str:
        pairs = ", ".join(f"{l!r}: {m:.6g}" for l, m in zip(self.space.labels, self.mass))
        return f"FiniteDist({{{pairs}}})"


@dataclass(frozen=True)
class ScalarFn:
    """A [0,1]-valued function on a FiniteSpace, stored as a value vector."""

    space: FiniteSpace
    values: np.ndarray = field(repr=False)
    name: str = ""

    def __init__(self, space: FiniteSpace, values: Sequence[float], name: str = ""):
        vec = np.asarray(values, dtype=float)
        if vec.shape != (len(space),):
            raise SpaceMismatch("value vector length does not match the space")
        if np.any(vec < -1e-12) or np.any(vec > 1 + 1e-12):
            raise RangeError("scalar function values must lie in [0,1]")
        vec = np.clip(vec, 0.0, 1.0)
        vec.setflags(write=False)
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", vec)
        object.__setattr__(self, "name", name)

    def __call__(self, label) -> float:
        return float(self.values[self.space.index(label)])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ScalarFn)
            and self.space == other.space
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash((self.space.labels, self.values.tobytes()))

    def __repr__(self) -> str:
        tag = self.name or "values=" + np.array2string(self.values, precision=4)
        return f"ScalarFn({tag})"


@dataclass(frozen=True)
class LDictionary:
    """A finite list of ScalarFn over one common space.

    Solvers that optimize a distribution over (decision, function) pairs
    restrict the function coordinate to one of these entries; restricting
    the choice can only shrink the optimizer's options, so values computed
    against a dictionary are upper bounds for the unrestricted quantity.
    """

    entries: tuple

    def __init__(self, entries: Iterable[ScalarFn]):
        entries = tuple(entries)
        if not entries:
            raise RangeError("dictionary must be non-empty")
        space = entries[0].space
        for fn in entries[1:]:
            if fn.space != space:
                raise SpaceMismatch("dictionary entries live on different spaces")
        object.__setattr__(self, "entries", entries)

    @property
    def space(self) -> FiniteSpace:
        return self.entries[0].space

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i: int) -> ScalarFn:
        return self.entries[i]


# ---------------------------------------------------------------------------
# Divergences
# ---------------------------------------------------------------------------


def hellinger_sq(p: FiniteDist, q: FiniteDist) -> float:
    """Squared Hellinger distance (1/2) * sum_o (sqrt P - sqrt Q)^2."""
    _require_same_space(p, q)
    diff = np.sqrt(p.mass) - np.sqrt(q.mass)
    return float(0.5 * np.dot(diff, diff))


def tv(p: FiniteDist, q: FiniteDist) -> float:
    """Total-variation distance (1/2) * sum |P - Q|."""
    _require_same_space(p, q)
    return float(0.5 * np.abs(p.mass - q.mass).sum())


def kl(p: FiniteDist, q: FiniteDist) -> float:
    """KL(P || Q) in nats, with 0*log(0) = 0; requires supp(P) <= supp(Q)."""
    _require_same_space(p, q)
    support = p.mass > 0
    if np.any(q.mass[support] == 0):
        raise AbsoluteContinuityError("KL requires support(P) within support(Q)")
    pm, qm = p.mass[support], q.mass[support]
    return float(np.dot(pm, np.log(pm / qm)))


def chi_sq(p: FiniteDist, q: FiniteDist) -> float:
    """Chi-square divergence sum (P - Q)^2 / Q; requires supp(P) <= supp(Q)."""
    _require_same_space(p, q)
    support = q.mass > 0
    if np.any(p.mass[~support] > 0):
        raise AbsoluteContinuityError("chi-square requires support(P) within support(Q)")
    pm, qm = p.mass[support], q.mass[support]
    return float(np.sum((pm - qm) ** 2 / qm))


def l_divergence(p: FiniteDist, q: FiniteDist, fn: ScalarFn) -> float:
    """|E_P fn - E_Q fn|, the weak divergence induced by a [0,1] functional.

    Always bounded by tv(p, q).
    """
    _require_same_space(p, q)
    if fn.space != p.space:
        raise SpaceMismatch("functional is defined on a different space")
    return float(abs(np.dot(p.mass - q.mass, fn.values)))


def huber_hellinger(p: FiniteDist, q: FiniteDist, beta: float) -> float:
    """Least squared Hellinger distance to Q over beta-perturbations of P.

    Minimizes D_H^2((1-beta)*P + beta*P', Q) over all distributions P'.
    Writing m = (1-beta)*P + beta*P', the problem is to maximize the
    Bhattacharyya affinity sum_o sqrt(m_o * Q_o) subject to
    m_o >= (1-beta)*P_o and sum m = 1.  The KKT conditions give
    m_o = max{(1-beta)*P_o, Q_o / (4 mu^2)} with the multiplier mu fixed
    by the budget constraint; mu is found by bisection to 1e-12.
    """
    _require_same_space(p, q)
    if not 0.0 <= beta <= 1.0:
        raise RangeError(f"perturbation level must lie in [0,1], got {beta}")
    if beta == 0.0:
        return hellinger_sq(p, q)
    floor = (1.0 - beta) * p.mass
    qm = q.mass

    def budget(mu: float) -> float:
        return float(np.sum(np.maximum(floor, qm / (4.0 * mu * mu))))

    # budget() is decreasing in mu; bracket a root of budget(mu) = 1.
    lo, hi = 1e-9, 1.0
    while budget(hi) > 1.0:
        hi *= 2.0
    while budget(lo) < 1.0:
        lo /= 2.0
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if budget(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    m = np.maximum(floor, qm / (4.0 * mu * mu))
    m = m / m.sum()
    affinity = float(np.sum(np.sqrt(m * qm)))
    return max(0.0, 1.0 - affinity)


def rad(mean: float) -> FiniteDist:
    """The distribution on {-1, +1} with the given mean: P(+1) = (1+mean)/2."""
    if not -1.0 <= mean <= 1.0:
        raise RangeError(f"mean must lie in [-1,1], got {mean}")
    return FiniteDist(SIGN_SPACE, [(1.0 - mean) / 2.0, (1.0 + mean) / 2.0])


#: The two-outcome space shared by all rad() distributions, ordered (-1, +1).
SIGN_SPACE = FiniteSpace((-1, +1))


def mix(dists: Sequence[FiniteDist], weights: Sequence[float]) -> FiniteDist:
    """Convex combination of distributions on a common space."""
    if not dists:
        raise RangeError("cannot mix zero distributions")
    space = dists[0].space
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(dists),):
        raise RangeError("one weight per distribution required")
    if np.any(w < -1e-12) or abs(w.sum() - 1.0) > _SUM_TOL:
        raise RangeError("mixture weights must form a probability vector")
    acc = np.zeros(len(space))
    for wi, d in zip(w, dists):
        if d.space != space:
            raise SpaceMismatch("mixture components live on different spaces")
        acc += wi * d.mass
    return FiniteDist(space, acc)
