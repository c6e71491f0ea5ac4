"""Locally-private channels and their decomposition into binary mixtures.

A channel is a row-stochastic kernel from a latent space Z to an outcome
space O.  Its privacy level is the largest log-likelihood ratio between
any two rows; a channel at level alpha leaks at most an alpha-scaled
amount of any [0,1] functional of the latent variable, which is made
quantitative by ``sdpi_decompose``/``sdpi_check``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NotDP, RangeError, SpaceMismatch
from .prob import SIGN_SPACE, FiniteDist, FiniteSpace, LDictionary, ScalarFn, l_divergence

_AUDIT_SLACK = 1e-12


@dataclass(frozen=True)
class Channel:
    """Row-stochastic kernel Z -> distributions over O."""

    input: FiniteSpace
    output: FiniteSpace
    kernel: np.ndarray = field(repr=False)  # shape (|Z|, |O|), rows sum to 1

    def __init__(self, input: FiniteSpace, output: FiniteSpace, kernel):
        mat = np.asarray(kernel, dtype=float)
        if mat.shape != (len(input), len(output)):
            raise SpaceMismatch("kernel shape does not match the spaces")
        if np.any(mat < -1e-12):
            raise RangeError("kernel entries must be non-negative")
        mat = np.clip(mat, 0.0, None)
        sums = mat.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise RangeError("kernel rows must sum to 1")
        mat = mat / sums[:, None]
        mat.setflags(write=False)
        object.__setattr__(self, "input", input)
        object.__setattr__(self, "output", output)
        object.__setattr__(self, "kernel", mat)

    def row(self, z) -> FiniteDist:
        return FiniteDist(self.output, self.kernel[self.input.index(z)])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Channel)
            and self.input == other.input
            and self.output == other.output
            and np.array_equal(self.kernel, other.kernel)
        )


def dp_level(channel: Channel) -> float:
    """Privacy level: max over outcomes o and rows z, z' of log Q(o|z)/Q(o|z').

    Returns +inf when some outcome has probability 0 under one row and
    positive probability under another.  On a finite outcome space the
    per-outcome ratios dominate all event ratios, so singleton events
    suffice.
    """
    level = 0.0
    kernel = channel.kernel
    for o in range(kernel.shape[1]):
        col = kernel[:, o]
        hi, lo = float(col.max()), float(col.min())
        if hi == 0.0:
            continue  # outcome never occurs; carries no information
        if lo == 0.0:
            return math.inf
        level = max(level, math.log(hi / lo))
    return level


def binary_channel(fn: ScalarFn, alpha: float) -> Channel:
    """Two-outcome channel with bias c_alpha * fn(z), c_alpha = 1 - e^{-alpha}.

    Emits +1 with probability (1 + c_alpha*fn(z))/2.  The result is always
    alpha-private, with equality exactly when fn attains both 0 and 1.
    """
    if alpha <= 0:
        raise RangeError(f"privacy level must be positive, got {alpha}")
    c = 1.0 - math.exp(-alpha)
    plus = (1.0 + c * fn.values) / 2.0
    kernel = np.stack([1.0 - plus, plus], axis=1)  # SIGN_SPACE order (-1, +1)
    return Channel(fn.space, SIGN_SPACE, kernel)


def apply_channel(channel: Channel, dist: FiniteDist) -> FiniteDist:
    """Marginal of o when z ~ dist and o ~ channel(.|z)."""
    if dist.space != channel.input:
        raise SpaceMismatch("distribution is not on the channel's input space")
    return FiniteDist(channel.output, dist.mass @ channel.kernel)


@dataclass(frozen=True)
class SdpiDecomposition:
    """Exact rewrite of an alpha-private channel over its row-minimum floor.

    With floor(o) = min_z Q(o|z), every kernel entry factors as
    Q(o|z) = floor(o) * (1 + (e^alpha - 1) * fn_o(z)) with fn_o in [0,1].
    ``base`` is the floor normalized to a distribution over the surviving
    outcomes; all-zero outcome columns are dropped since they carry no
    information.
    """

    base: FiniteDist
    fns: tuple  # one ScalarFn per surviving outcome, aligned with base.space
    alpha: float
    floor: np.ndarray = field(repr=False)  # unnormalized floor masses

    @property
    def dictionary(self) -> LDictionary:
        return LDictionary(self.fns)

    def expected_l_divergence_sq(self, p1: FiniteDist, p2: FiniteDist) -> float:
        """E over fn ~ base of l_divergence(p1, p2, fn)^2."""
        total = 0.0
        for w, fn in zip(self.base.mass, self.fns):
            total += float(w) * l_divergence(p1, p2, fn) ** 2
        return total


def sdpi_decompose(channel: Channel, alpha: float) -> SdpiDecomposition:
    """Decompose an audited alpha-private channel into its floor and functionals.

    Raises NotDP when the channel's actual privacy level exceeds alpha
    (in particular when some outcome column mixes zero and positive
    entries).  The reconstruction identity holds exactly for the returned
    decomposition.
    """
    if alpha <= 0:
        raise RangeError(f"privacy level must be positive, got {alpha}")
    level = dp_level(channel)
    if level > alpha + _AUDIT_SLACK:
        raise NotDP(f"channel has privacy level {level}, exceeding {alpha}")
    kernel = channel.kernel
    scale = math.exp(alpha) - 1.0
    keep, fns, floors = [], [], []
    for o in range(kernel.shape[1]):
        col = kernel[:, o]
        lo = float(col.min())
        if lo == 0.0:
            continue  # dp_level audit above guarantees the column is all-zero
        keep.append(o)
        floors.append(lo)
        fns.append((col / lo - 1.0) / scale)
    floor = np.array(floors)
    out_space = FiniteSpace(tuple(channel.output.labels[o] for o in keep))
    base = FiniteDist(out_space, floor / floor.sum())
    scalar_fns = tuple(
        ScalarFn(channel.input, v, name=f"sdpi[{out_space.labels[i]!r}]")
        for i, v in enumerate(fns)
    )
    return SdpiDecomposition(base=base, fns=scalar_fns, alpha=alpha, floor=floor)


@dataclass(frozen=True)
class SdpiReport:
    """The five numbers of a strong data-processing check.

    The sandwich asserted by callers is
        lower_const * expected_lsq <= hellinger <= (ratio_sq / 8) * expected_lsq
    and
        kl <= chi_sq <= ratio_sq * expected_lsq,
    where ratio_sq = (e^alpha - 1)^2 and lower_const = ratio_sq / (8 e^{2 alpha}).
    ``proof_lower_const`` records the tighter pre-normalization constant
    ratio_sq / (8 e^alpha) for reference; it is not asserted.
    """

    expected_lsq: float
    hellinger: float
    kl: float
    chi_sq: float
    ratio_sq: float
    alpha: float

    @property
    def lower_const(self) -> float:
        return self.ratio_sq / (8.0 * math.exp(2.0 * self.alpha))

    @property
    def proof_lower_const(self) -> float:
        return self.ratio_sq / (8.0 * math.exp(self.alpha))

    def as_tuple(self) -> tuple:
        return (self.expected_lsq, self.hellinger, self.kl, self.chi_sq, self.ratio_sq)


def sdpi_check(
    channel: Channel, p1: FiniteDist, p2: FiniteDist, alpha: float
) -> SdpiReport:
    """Evaluate both sides of the data-processing sandwich for one pair."""
    from .prob import chi_sq as _chi, hellinger_sq as _hell, kl as _kl

    deco = sdpi_decompose(channel, alpha)
    o1 = apply_channel(channel, p1)
    o2 = apply_channel(channel, p2)
    return SdpiReport(
        expected_lsq=deco.expected_l_divergence_sq(p1, p2),
        hellinger=_hell(o1, o2),
        kl=_kl(o1, o2),
        chi_sq=_chi(o1, o2),
        ratio_sq=(math.exp(alpha) - 1.0) ** 2,
        alpha=alpha,
    )


def random_dp_channel(
    input_space: FiniteSpace,
    alpha: float,
    rng: np.random.Generator,
    n_components: int = 2,
    uniform_blend: float | None = None,
) -> Channel:
    """Random alpha-private channel: tagged binary channels blended with noise.

    Draws ``n_components`` binary channels over random [0,1] functionals,
    tags their outcomes so the output space has 2 * n_components elements,
    and mixes each with a uniform kernel.  Mixtures of alpha-private
    channels with a 0-private one stay alpha-private, so the result is
    audited by construction without rejection sampling.
    """
    if alpha <= 0:
        raise RangeError("privacy level must be positive")
    nz = len(input_space)
    tag_weights = rng.dirichlet(np.ones(n_components))
    blend = rng.uniform(0.0, 1.0) if uniform_blend is None else uniform_blend
    cols = []
    c = 1.0 - math.exp(-alpha)
    for _ in range(n_components):
        values = rng.uniform(0.0, 1.0, size=nz)
        plus = (1.0 + c * values) / 2.0
        pair = np.stack([1.0 - plus, plus], axis=1)
        pair = (1.0 - blend) * pair + blend * 0.5
        cols.append(pair)
    kernel = np.hstack([w * pair for w, pair in zip(tag_weights, cols)])
    labels = tuple((k, s) for k in range(n_components) for s in (-1, +1))
    return Channel(input_space, FiniteSpace(labels), kernel)


def channel_to_json(channel: Channel) -> dict:
    return {
        "kind": "kernel",
        "input": list(channel.input.labels),
        "output": list(channel.output.labels),
        "matrix": [[float(v) for v in row] for row in channel.kernel],
    }


def channel_from_json(payload: dict) -> Channel:
    if payload.get("kind") != "kernel":
        raise RangeError(f"unknown channel kind {payload.get('kind')!r}")
    return Channel(
        FiniteSpace(tuple(_freeze(x) for x in payload["input"])),
        FiniteSpace(tuple(_freeze(x) for x in payload["output"])),
        np.asarray(payload["matrix"], dtype=float),
    )


def _freeze(x):
    return tuple(_freeze(v) for v in x) if isinstance(x, list) else x
