"""Online estimation oracles for the two-outcome private protocol.

Both oracles observe triples (decision, functional, sign) where the sign
has mean c_alpha * E_{z ~ M*(decision)}[functional(z)], c_alpha = 1 -
e^{-alpha}, and produce a model estimate before each observation.  The
estimate is a convex mixture of class members (aggregation) or a single
distribution over the latent space (mirror descent).  Estimation error is
tracked as the cumulative squared functional gap between truth and
estimate under the per-round sampling distribution; the tracked quantity
is compared against a configured bound whose leading constant is an
engineering choice (default 20), not a derived value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AbsoluteContinuityError, RangeError
from .models import ModelClass
from .prob import FiniteDist, ScalarFn

DEFAULT_EST_SCALE = 20.0


def vovk_bound(n_models: int, delta: float, alpha: float, scale: float = DEFAULT_EST_SCALE) -> float:
    """Configured estimation budget for aggregation: scale * ln(n/delta) / alpha^2."""
    return scale * math.log(n_models / delta) / alpha**2


def omd_bound(
    c_kl: float, n_rounds: int, delta: float, alpha: float, scale: float = DEFAULT_EST_SCALE
) -> float:
    """Configured budget for mirror descent: scale * (sqrt(c_kl*N)/alpha + ln(1/delta)/alpha^2)."""
    return scale * (math.sqrt(c_kl * n_rounds) / alpha + math.log(1.0 / delta) / alpha**2)


@dataclass
class EstRecord:
    """Cumulative squared-functional-gap ledger against a configured bound."""

    bound: float
    per_step: list = field(default_factory=list)
    cumulative: float = 0.0

    def append(self, value: float) -> None:
        if value < -1e-12:
            raise RangeError("estimation-error increments must be non-negative")
        value = max(0.0, float(value))
        self.per_step.append(value)
        self.cumulative += value

    @property
    def within_bound(self) -> bool:
        return self.cumulative <= self.bound


def record_est(
    record: EstRecord,
    truth_means: np.ndarray,
    q_pairs: np.ndarray,
    predicted_means: np.ndarray,
) -> EstRecord:
    """Append E_{(pi,l) ~ q} (truth mean - predicted mean)^2 for this round.

    ``truth_means`` and ``predicted_means`` are (decisions, functionals)
    matrices of expected functional values; ``q_pairs`` is the sampling
    distribution over (decision, functional) pairs, same shape.  Only the
    harness may call this: the truth is never visible to a learner.
    """
    gap = (truth_means - predicted_means) ** 2
    record.append(float(np.sum(q_pairs * gap)))
    return record


class VovkAggregator:
    """Exponential-weights aggregation with mixture predictions.

    Weights update by w(M) *= exp(-eta * (c_alpha * mean_M - o)^2 / 2)
    with eta = 1/8, the safe rate for squared loss on [-1, 1] ranges; the
    prediction is the weighted mixture of class members, so it always
    lies in the convex hull of the class.
    """

    def __init__(self, cls: ModelClass, alpha: float, eta: float = 0.125):
        if alpha <= 0:
            raise RangeError("privacy level must be positive")
        self.cls = cls
        self.alpha = alpha
        self.c_alpha = 1.0 - math.exp(-alpha)
        self.eta = eta
        self.log_w = np.zeros(len(cls))
        self.t = 0
        # means[m, pi, l] = E_{z ~ M_m(pi)} fn_l(z), the only statistics used
        fn_mat = np.stack([fn.values for fn in cls.dictionary.entries])
        self.means = np.stack([m.rows @ fn_mat.T for m in cls.models])
        self._means_flat = self.means.reshape(len(cls.models), -1)
        self._weights: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            w = np.exp(self.log_w - self.log_w.max())
            self._weights = w / w.sum()
        return self._weights

    def predicted_means(self) -> np.ndarray:
        """Mixture's (decisions, functionals) expected-value matrix."""
        return (self.weights @ self._means_flat).reshape(self.means.shape[1:])

    def predicted_model(self):
        return self.cls.mixture(self.weights)

    def update(self, pi_idx: int, l_idx: int, o: int) -> None:
        if o not in (-1, +1):
            raise RangeError("observation must be a sign")
        preds = self.c_alpha * self.means[:, pi_idx, l_idx]
        self.log_w -= self.eta * (preds - o) ** 2 / 2.0
        self.log_w -= self.log_w.max()  # renormalize lazily, keeps exp() finite
        self._weights = None
        self.t += 1


def vovk_step(state: VovkAggregator, pi_idx: int, l_idx: int, o: int):
    """One aggregation step; returns (state, mixture weights after update)."""
    state.update(pi_idx, l_idx, o)
    return state, state.weights


class OnlineMirrorDescent:
    """Mirror descent over the latent simplex for statistical tasks.

    Maintains log-density increments against a reference distribution; the
    round-t estimate is proportional to ref[z] * exp(-eta * sum over past
    rounds of (c_alpha * <fn_s, est_s> - o_s) * fn_s(z)).  The estimate's
    support always equals the reference's support.
    """

    def __init__(
        self,
        reference: FiniteDist,
        c_kl: float,
        n_rounds: int,
        alpha: float,
        cls: ModelClass | None = None,
    ):
        if alpha <= 0:
            raise RangeError("privacy level must be positive")
        if c_kl <= 0 or n_rounds < 1:
            raise RangeError("KL radius and horizon must be positive")
        if cls is not None:
            support = reference.mass > 0
            for m in cls.models:
                if np.any(m.rows[0][~support] > 0):
                    raise AbsoluteContinuityError(
                        "class member support exceeds the reference support"
                    )
        self.reference = reference
        self.alpha = alpha
        self.c_alpha = 1.0 - math.exp(-alpha)
        self.eta = math.sqrt(c_kl / (16.0 * n_rounds))
        self.log_ref = np.full(len(reference.space), -np.inf)
        pos = reference.mass > 0
        self.log_ref[pos] = np.log(reference.mass[pos])
        self.grad_sum = np.zeros(len(reference.space))
        self.t = 0

    def predict(self) -> FiniteDist:
        logits = self.log_ref - self.eta * self.grad_sum
        support = np.isfinite(logits)
        out = np.zeros_like(self.grad_sum)
        shifted = np.exp(logits[support] - logits[support].max())
        out[support] = shifted / shifted.sum()
        return FiniteDist(self.reference.space, out)

    def update(self, fn: ScalarFn, o: int, predicted: FiniteDist | None = None) -> None:
        if o not in (-1, +1):
            raise RangeError("observation must be a sign")
        pred = predicted if predicted is not None else self.predict()
        inner = float(np.dot(pred.mass, fn.values))
        self.grad_sum += (self.c_alpha * inner - o) * fn.values
        self.t += 1


def omd_step(state: OnlineMirrorDescent, fn: ScalarFn, o: int):
    """One mirror-descent step; returns (state, the estimate used this round)."""
    predicted = state.predict()
    state.update(fn, o, predicted)
    return state, predicted
