"""Finite model classes, losses, and the named problem constructions.

A model maps each decision to a distribution over a latent observation
space.  A model class bundles finitely many models with a loss
specification and a dictionary of [0,1] functionals used by the solvers.
Policy and decision spaces are always enumerated explicitly, guarded by a
hard size cap: exact computation is the point, so oversized instances are
rejected rather than approximated.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyClass,
    InstanceTooLarge,
    InvalidPartition,
    NotFound,
    RangeError,
    SpaceMismatch,
)
from .prob import SIGN_SPACE, FiniteDist, FiniteSpace, LDictionary, ScalarFn, rad

#: Largest decision space that builders will enumerate explicitly.
DEFAULT_DECISION_CAP = 4096


@dataclass(frozen=True)
class Model:
    """A map from decisions to distributions over the observation space."""

    decisions: FiniteSpace
    obs_space: FiniteSpace
    rows: np.ndarray = field(repr=False)  # shape (|decisions|, |obs_space|)

    def __init__(self, decisions: FiniteSpace, obs_space: FiniteSpace, rows):
        mat = np.asarray(rows, dtype=float)
        if mat.ndim == 1:  # statistical task: one law for every decision
            mat = np.tile(mat, (len(decisions), 1))
        if mat.shape != (len(decisions), len(obs_space)):
            raise SpaceMismatch("row matrix does not match decision/observation spaces")
        sums = mat.sum(axis=1)
        if np.any(mat < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise RangeError("each decision's row must be a probability vector")
        mat = np.clip(mat, 0.0, None) / sums[:, None]
        mat.setflags(write=False)
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "obs_space", obs_space)
        object.__setattr__(self, "rows", mat)

    def dist(self, decision) -> FiniteDist:
        return FiniteDist(self.obs_space, self.rows[self.decisions.index(decision)])

    def dist_at(self, idx: int) -> FiniteDist:
        return FiniteDist(self.obs_space, self.rows[idx])

    @property
    def is_statistical(self) -> bool:
        return bool(np.all(self.rows == self.rows[0]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Model)
            and self.decisions == other.decisions
            and self.obs_space == other.obs_space
            and np.array_equal(self.rows, other.rows)
        )


@dataclass(frozen=True)
class RewardFn:
    """A known reward R(z, decision) with values in [0,1]."""

    obs_space: FiniteSpace
    decisions: FiniteSpace
    values: np.ndarray = field(repr=False)  # shape (|obs_space|, |decisions|)

    def __init__(self, obs_space, decisions, values):
        mat = np.asarray(values, dtype=float)
        if mat.shape != (len(obs_space), len(decisions)):
            raise SpaceMismatch("reward table does not match the spaces")
        if np.any(mat < -1e-12) or np.any(mat > 1 + 1e-12):
            raise RangeError("reward values must lie in [0,1]")
        mat = np.clip(mat, 0.0, 1.0)
        mat.setflags(write=False)
        object.__setattr__(self, "obs_space", obs_space)
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "values", mat)


@dataclass(frozen=True)
class LossSpec:
    """Loss specification: reward-based, explicit table + metric, or indicator.

    kind == "reward":    L(M, pi) = max_pi' V(M, pi') - V(M, pi) >= 0.
    kind == "table":     explicit (model, decision) loss table; when a
                         metric ``rho`` and per-model optima are supplied
                         the table must equal rho[pi_M, pi].
    kind == "indicator": partition of the class into blocks; decisions are
                         block indices and the loss is 1{pi != block(M)}.
    """

    kind: str
    reward: RewardFn | None = None
    table: np.ndarray | None = None
    rho: np.ndarray | None = None
    pi_star: tuple | None = None  # per-model optimal decision indices (table kind)
    blocks: tuple | None = None  # tuple of tuples of model indices (indicator kind)

    @staticmethod
    def reward_based(reward: RewardFn) -> "LossSpec":
        return LossSpec(kind="reward", reward=reward)

    @staticmethod
    def from_table(table, rho=None, pi_star=None) -> "LossSpec":
        table = np.asarray(table, dtype=float)
        if np.any(table < -1e-12):
            raise RangeError("loss table must be non-negative")
        if rho is not None:
            rho = np.asarray(rho, dtype=float)
            n = rho.shape[0]
            if rho.shape != (n, n) or np.any(np.abs(rho - rho.T) > 1e-9):
                raise RangeError("metric must be a symmetric square matrix")
            for k in range(n):  # triangle inequality, O(n^3) but n is tiny
                if np.any(rho > rho[:, [k]] + rho[None, k, :] + 1e-9):
                    raise RangeError("metric violates the triangle inequality")
        return LossSpec(
            kind="table",
            table=table,
            rho=rho,
            pi_star=None if pi_star is None else tuple(pi_star),
        )

    @staticmethod
    def indicator(blocks: Sequence[Sequence[int]], n_models: int) -> "LossSpec":
        blocks = tuple(tuple(b) for b in blocks)
        seen: set[int] = set()
        for b in blocks:
            if not b:
                raise InvalidPartition("empty partition block")
            if seen & set(b):
                raise InvalidPartition("partition blocks overlap")
            seen |= set(b)
        if seen != set(range(n_models)):
            raise InvalidPartition("partition does not cover the model class")
        return LossSpec(kind="indicator", blocks=blocks)


class ModelClass:
    """Finitely many models sharing decision/observation spaces, with a loss.

    The loss table and (for reward-based losses) the value table are
    materialized at construction; instances are immutable afterwards.
    """

    def __init__(self, models: Sequence[Model], loss: LossSpec, dictionary: LDictionary):
        models = tuple(models)
        if not models:
            raise EmptyClass("a model class needs at least one model")
        decisions, obs_space = models[0].decisions, models[0].obs_space
        for m in models[1:]:
            if m.decisions != decisions or m.obs_space != obs_space:
                raise SpaceMismatch("models do not share decision/observation spaces")
        if dictionary.space != obs_space:
            raise SpaceMismatch("dictionary is not over the observation space")
        self.models = models
        self.decisions = decisions
        self.obs_space = obs_space
        self.loss_spec = loss
        self.dictionary = dictionary
        self._values: np.ndarray | None = None
        if loss.kind == "reward":
            self._values = np.stack(
                [self._value_row(m, loss.reward) for m in models]
            )
            best = self._values.max(axis=1, keepdims=True)
            self.loss_table = best - self._values
        elif loss.kind == "table":
            if loss.table.shape != (len(models), len(decisions)):
                raise SpaceMismatch("loss table shape does not match class")
            self.loss_table = loss.table
        elif loss.kind == "indicator":
            table = np.ones((len(models), len(decisions)))
            if len(decisions) != len(loss.blocks):
                raise InvalidPartition("decision space must index the blocks")
            for b_idx, block in enumerate(loss.blocks):
                for m_idx in block:
                    table[m_idx, b_idx] = 0.0
            self.loss_table = table
        else:  # pragma: no cover - constructors above are exhaustive
            raise RangeError(f"unknown loss kind {loss.kind!r}")
        self.loss_table.setflags(write=False)

    @staticmethod
    def _value_row(model: Model, reward: RewardFn) -> np.ndarray:
        # V(M, pi) = E_{z ~ M(pi)} R(z, pi)
        return np.einsum("pz,zp->p", model.rows, reward.values)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def values_table(self) -> np.ndarray:
        if self._values is None:
            raise RangeError("value table requires a reward-based loss")
        return self._values

    def value(self, model: Model, decision_idx: int) -> float:
        if self.loss_spec.kind != "reward":
            raise RangeError("value requires a reward-based loss")
        return float(self._value_row(model, self.loss_spec.reward)[decision_idx])

    def value_row(self, model: Model) -> np.ndarray:
        if self.loss_spec.kind != "reward":
            raise RangeError("value requires a reward-based loss")
        return self._value_row(model, self.loss_spec.reward)

    def loss(self, model_idx: int, decision_idx: int) -> float:
        return float(self.loss_table[model_idx, decision_idx])

    def optimal_decision(self, model_idx: int) -> int:
        """Lowest-index minimizer of the loss row (deterministic tie-break)."""
        return int(np.argmin(self.loss_table[model_idx]))

    def model_index(self, model: Model) -> int:
        for i, m in enumerate(self.models):
            if m == model:
                return i
        raise NotFound("model is not a member of this class")

    def mixture(self, weights: Sequence[float]) -> Model:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self.models),) or np.any(w < -1e-12):
            raise RangeError("mixture weights must be a probability vector")
        if abs(w.sum() - 1.0) > 1e-9:
            raise RangeError("mixture weights must sum to 1")
        rows = np.tensordot(w, np.stack([m.rows for m in self.models]), axes=1)
        return Model(self.decisions, self.obs_space, rows)

    def divergence_cube(self, reference: Model) -> np.ndarray:
        """D[m, pi, l] = (E_{M_m(pi)} fn_l - E_{ref(pi)} fn_l)^2 for dictionary fns."""
        fn_mat = np.stack([fn.values for fn in self.dictionary.entries])  # (L, |Z|)
        ref_means = reference.rows @ fn_mat.T  # (|Pi|, L)
        out = np.empty((len(self.models), len(self.decisions), len(self.dictionary)))
        for i, m in enumerate(self.models):
            out[i] = (m.rows @ fn_mat.T - ref_means) ** 2
        return out

    def hellinger_matrix(self, reference: Model) -> np.ndarray:
        """H[m, pi] = squared Hellinger distance between M_m(pi) and ref(pi)."""
        ref_sqrt = np.sqrt(reference.rows)
        out = np.empty((len(self.models), len(self.decisions)))
        for i, m in enumerate(self.models):
            diff = np.sqrt(m.rows) - ref_sqrt
            out[i] = 0.5 * np.sum(diff * diff, axis=1)
        return out


@dataclass(frozen=True)
class QueryModelClass:
    """Deterministic query models: responses to (decision, measurement) pairs.

    ``responses`` holds one real vector per (model, query); closeness of
    responses is measured in the named norm ("linf" or "l2").
    """

    decisions: FiniteSpace
    queries: FiniteSpace
    responses: np.ndarray = field(repr=False)  # (|models|, |queries|, dim)
    norm: str
    loss: LossSpec

    def __init__(self, decisions, queries, responses, norm, loss):
        mat = np.asarray(responses, dtype=float)
        if mat.ndim == 2:
            mat = mat[:, :, None]
        if mat.ndim != 3 or mat.shape[1] != len(queries):
            raise SpaceMismatch("responses must be (models, queries, dim)")
        if norm not in ("linf", "l2"):
            raise RangeError(f"unknown norm {norm!r}")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "decisions", decisions)
        object.__setattr__(self, "queries", queries)
        object.__setattr__(self, "responses", mat)
        object.__setattr__(self, "norm", norm)
        object.__setattr__(self, "loss", loss)
        table = _query_loss_table(self)
        table.setflags(write=False)
        object.__setattr__(self, "loss_table", table)

    def __len__(self) -> int:
        return self.responses.shape[0]

    def response(self, model_idx: int, query_idx: int) -> np.ndarray:
        return self.responses[model_idx, query_idx]

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        return float(np.abs(d).max() if self.norm == "linf" else np.linalg.norm(d))


def _query_loss_table(qc: QueryModelClass) -> np.ndarray:
    spec = qc.loss
    if spec.kind == "table":
        if spec.table.shape != (len(qc), len(qc.decisions)):
            raise SpaceMismatch("loss table shape does not match query class")
        return np.array(spec.table)
    if spec.kind == "indicator":
        table = np.ones((len(qc), len(qc.decisions)))
        for b_idx, block in enumerate(spec.blocks):
            for m_idx in block:
                table[m_idx, b_idx] = 0.0
        return table
    raise RangeError("query classes support table or indicator losses")


# ---------------------------------------------------------------------------
# Dictionaries
# ---------------------------------------------------------------------------


def default_dictionary(
    obs_space: FiniteSpace,
    reward: RewardFn | None = None,
    extra: Sequence[ScalarFn] = (),
) -> LDictionary:
    """Singleton indicators over Z, plus reward slices, plus extensions.

    Singleton indicators separate any two distributions on a finite space,
    so this dictionary never collapses distinct models.
    """
    entries: list[ScalarFn] = []
    n = len(obs_space)
    for i, label in enumerate(obs_space.labels):
        vec = np.zeros(n)
        vec[i] = 1.0
        entries.append(ScalarFn(obs_space, vec, name=f"ind[{label!r}]"))
    if reward is not None:
        seen = {fn.values.tobytes() for fn in entries}
        for j, d_label in enumerate(reward.decisions.labels):
            col = reward.values[:, j]
            if col.tobytes() not in seen:
                seen.add(col.tobytes())
                entries.append(ScalarFn(obs_space, col, name=f"reward[{d_label!r}]"))
    entries.extend(extra)
    return LDictionary(entries)


# ---------------------------------------------------------------------------
# Named builders
# ---------------------------------------------------------------------------


def mab_class(arm_means: Sequence[Sequence[float]]) -> ModelClass:
    """Multi-armed bandits over {-1,+1} rewards: one model per mean vector."""
    means = np.asarray(arm_means, dtype=float)
    if means.ndim != 2:
        raise RangeError("arm_means must be a list of per-model mean vectors")
    if np.any(np.abs(means) > 1 + 1e-12):
        raise RangeError("arm means must lie in [-1,1]")
    k = means.shape[1]
    decisions = FiniteSpace(tuple(range(k)))
    models = []
    for row in means:
        rows = np.stack([rad(m).mass for m in row])
        models.append(Model(decisions, SIGN_SPACE, rows))
    reward = RewardFn(
        SIGN_SPACE, decisions, np.tile([[0.0], [1.0]], (1, k))
    )  # R(z, .) = (z+1)/2
    dictionary = default_dictionary(SIGN_SPACE, reward)
    return ModelClass(models, LossSpec.reward_based(reward), dictionary)


def canonical_mab(k: int) -> ModelClass:
    """K models; model i has arm i at mean +1 and all other arms at -1."""
    if k < 1:
        raise RangeError("need at least one arm")
    return mab_class(2.0 * np.eye(k) - 1.0)


def contextual_bandit_class(
    contexts: Sequence,
    actions: Sequence,
    fs: Sequence[np.ndarray],
    context_dists: Sequence[Sequence[float]],
    cap: int = DEFAULT_DECISION_CAP,
) -> ModelClass:
    """Contextual bandits with enumerated policy space.

    Each model pairs a context distribution with a mean-reward function
    f(x,a) in [-1,1]; an observation is (x, a, r) with x ~ nu, a = pi(x),
    r ~ rad(f(x, a)).  The policy space is all |A|^|X| maps, guarded by the
    cap.
    """
    x_space = FiniteSpace(tuple(contexts))
    nx, na = len(x_space), len(actions)
    if na**nx > cap:
        raise InstanceTooLarge(f"|A|^|X| = {na ** nx} exceeds cap {cap}")
    f_mats = [np.asarray(f, dtype=float) for f in fs]
    for f in f_mats:
        if f.shape != (nx, na):
            raise SpaceMismatch("reward function must be a (contexts, actions) table")
        if np.any(np.abs(f) > 1 + 1e-12):
            raise RangeError("mean rewards must lie in [-1,1]")
    nus = [np.asarray(nu, dtype=float) for nu in context_dists]
    if len(nus) != len(f_mats):
        raise RangeError("one context distribution per reward function")

    policies = tuple(itertools.product(range(na), repeat=nx))
    decisions = FiniteSpace(policies)
    obs_labels = tuple(
        (x, a, r) for x in x_space.labels for a in actions for r in (-1, +1)
    )
    obs_space = FiniteSpace(obs_labels)
    obs_index = {lab: i for i, lab in enumerate(obs_labels)}

    models = []
    for f, nu in zip(f_mats, nus):
        if abs(nu.sum() - 1.0) > 1e-9 or np.any(nu < 0):
            raise RangeError("context distribution must be a probability vector")
        rows = np.zeros((len(policies), len(obs_labels)))
        for p_idx, pol in enumerate(policies):
            for x_idx, x in enumerate(x_space.labels):
                a_idx = pol[x_idx]
                mean = f[x_idx, a_idx]
                rows[p_idx, obs_index[(x, actions[a_idx], +1)]] = nu[x_idx] * (1 + mean) / 2
                rows[p_idx, obs_index[(x, actions[a_idx], -1)]] = nu[x_idx] * (1 - mean) / 2
        models.append(Model(decisions, obs_space, rows))

    r_values = np.zeros((len(obs_labels), len(policies)))
    for z_idx, (_x, _a, r) in enumerate(obs_labels):
        r_values[z_idx, :] = (r + 1) / 2
    reward = RewardFn(obs_space, decisions, r_values)
    dictionary = default_dictionary(obs_space, reward)
    return ModelClass(models, LossSpec.reward_based(reward), dictionary)


def parity_class(
    d: int, lam: float, cap: int = DEFAULT_DECISION_CAP
) -> tuple[ModelClass, FiniteDist]:
    """Parity labels over the hypercube, with its hard reference law.

    One model per subset S of [d]: the covariate x is 0 with probability
    1 - lam and uniform on the nonzero points otherwise, and the label is
    y = (-1)^(sum of x over S).  The returned reference distribution draws
    y uniformly at random on nonzero x and deterministically y = +1 at
    x = 0 (the common label of every subset there), which makes the
    pairwise correlations of the class -lam/(2^d - 1) off the diagonal and
    lam on it.
    """
    if d < 2:
        raise RangeError("dimension must be at least 2")
    if not 0.0 <= lam <= 0.5:
        raise RangeError("mixing weight must lie in [0, 1/2]")
    n_x = 2**d
    if 2 * n_x > cap or 2**n_x > cap:
        raise InstanceTooLarge(f"parity instance with d={d} exceeds cap {cap}")
    xs = tuple(itertools.product((0, 1), repeat=d))
    obs_labels = tuple((x, y) for x in xs for y in (-1, +1))
    obs_space = FiniteSpace(obs_labels)
    obs_index = {lab: i for i, lab in enumerate(obs_labels)}
    x_mass = np.array(
        [1.0 - lam if sum(x) == 0 else lam / (n_x - 1) for x in xs]
    )

    subsets = tuple(
        frozenset(s)
        for r in range(d + 1)
        for s in itertools.combinations(range(d), r)
    )

    def f_vals(subset) -> np.ndarray:
        return np.array([(-1) ** sum(x[i] for i in subset) for x in xs], dtype=float)

    fs = tuple(itertools.product((-1, +1), repeat=n_x))  # all labelings, decisions
    decisions = FiniteSpace(fs)

    dists = []
    for subset in subsets:
        mass = np.zeros(len(obs_labels))
        labels = f_vals(subset)
        for x_idx, x in enumerate(xs):
            mass[obs_index[(x, int(labels[x_idx]))]] = x_mass[x_idx]
        dists.append(mass)

    models = [Model(decisions, obs_space, m) for m in dists]

    # Metric loss: rho(f, g) = P_{x ~ mu_lam}(f(x) != g(x)); pi_M = f_S.
    f_arr = np.array(fs, dtype=float)  # (|Pi|, n_x)
    disagree = (f_arr[:, None, :] != f_arr[None, :, :]).astype(float)
    rho = disagree @ x_mass
    pi_star = [fs.index(tuple(int(v) for v in f_vals(s))) for s in subsets]
    table = rho[pi_star, :]
    loss = LossSpec.from_table(table, rho=rho, pi_star=pi_star)

    ref_mass = np.zeros(len(obs_labels))
    for x_idx, x in enumerate(xs):
        if sum(x) == 0:
            ref_mass[obs_index[(x, +1)]] = x_mass[x_idx]
        else:
            ref_mass[obs_index[(x, -1)]] = x_mass[x_idx] / 2
            ref_mass[obs_index[(x, +1)]] = x_mass[x_idx] / 2
    reference = FiniteDist(obs_space, ref_mass)

    mclass = ModelClass(models, loss, default_dictionary(obs_space))
    return mclass, reference


def linear_model_class(
    covariates: Sequence[Sequence[float]],
    nu_list: Sequence[Sequence[float]],
    theta_list: Sequence[Sequence[float]],
    theta_grid: Sequence[Sequence[float]],
) -> ModelClass:
    """Linear response models with absolute estimation error.

    Model (nu, theta): draw a covariate index i ~ nu, then y ~ rad(<x_i,
    theta>).  Decisions are estimators from ``theta_grid`` and the loss of
    an estimate th at model (nu, theta) is E_{i ~ nu} |<x_i, th - theta>|.
    """
    X = np.asarray(covariates, dtype=float)
    if np.any(np.linalg.norm(X, axis=1) > 1 + 1e-9):
        raise RangeError("covariates must lie in the unit ball")
    thetas = np.asarray(theta_list, dtype=float)
    grid = np.asarray(theta_grid, dtype=float)
    for arr, what in ((thetas, "model parameters"), (grid, "estimator grid")):
        if np.any(np.linalg.norm(arr, axis=1) > 1 + 1e-9):
            raise RangeError(f"{what} must lie in the unit ball")
    nus = np.asarray(nu_list, dtype=float)
    if nus.shape != (thetas.shape[0], X.shape[0]):
        raise RangeError("one covariate distribution per model parameter")

    n = X.shape[0]
    obs_labels = tuple((i, y) for i in range(n) for y in (-1, +1))
    obs_space = FiniteSpace(obs_labels)
    decisions = FiniteSpace(tuple(tuple(float(v) for v in th) for th in grid))

    models = []
    for nu, theta in zip(nus, thetas):
        mean = X @ theta
        if np.any(np.abs(mean) > 1 + 1e-12):
            raise RangeError("model means <x, theta> must lie in [-1,1]")
        mass = np.empty(2 * n)
        mass[0::2] = nu * (1 - mean) / 2  # y = -1 entries
        mass[1::2] = nu * (1 + mean) / 2
        models.append(Model(decisions, obs_space, mass))

    table = np.empty((thetas.shape[0], grid.shape[0]))
    for m_idx, (nu, theta) in enumerate(zip(nus, thetas)):
        table[m_idx] = np.abs(X @ (grid - theta).T).T @ nu
    loss = LossSpec.from_table(table)
    return ModelClass(models, loss, default_dictionary(obs_space))


def regression_class(
    fs: Sequence[Sequence[float]],
    nu_list: Sequence[Sequence[float]],
    contexts: Sequence | None = None,
) -> ModelClass:
    """Well-specified regression: y ~ rad(f(x)) under a shared covariate law.

    Decisions are the candidate functions themselves; the loss is the
    reward-based excess squared error with R((x,y), f) = 1 - (y - f(x))^2/4.
    """
    f_arr = np.asarray(fs, dtype=float)
    if np.any(np.abs(f_arr) > 1 + 1e-12):
        raise RangeError("regression functions must map into [-1,1]")
    n_f, n_x = f_arr.shape
    nus = np.asarray(nu_list, dtype=float)
    if nus.shape != (n_f, n_x):
        raise RangeError("one covariate distribution per function")
    x_labels = tuple(contexts) if contexts is not None else tuple(range(n_x))

    obs_labels = tuple((x, y) for x in x_labels for y in (-1, +1))
    obs_space = FiniteSpace(obs_labels)
    decisions = FiniteSpace(tuple(range(n_f)))

    models = []
    for f, nu in zip(f_arr, nus):
        mass = np.empty(2 * n_x)
        mass[0::2] = nu * (1 - f) / 2
        mass[1::2] = nu * (1 + f) / 2
        models.append(Model(decisions, obs_space, mass))

    r_values = np.empty((len(obs_labels), n_f))
    for z_idx, (x, y) in enumerate(obs_labels):
        x_idx = x_labels.index(x)
        r_values[z_idx] = 1.0 - (y - f_arr[:, x_idx]) ** 2 / 4.0
    reward = RewardFn(obs_space, decisions, r_values)
    dictionary = default_dictionary(obs_space, reward)
    return ModelClass(models, LossSpec.reward_based(reward), dictionary)


def hypothesis_selection(
    models: Sequence[Model], partition: Sequence[Sequence[int]]
) -> ModelClass:
    """Repackage models with block-indicator loss over the given partition."""
    models = tuple(models)
    if not models:
        raise EmptyClass("hypothesis selection needs models")
    blocks = LossSpec.indicator(partition, len(models))
    decisions = FiniteSpace(tuple(range(len(blocks.blocks))))
    rebuilt = [Model(decisions, m.obs_space, np.tile(m.rows[0], (len(decisions), 1)))
               if m.is_statistical
               else _reindex_decisions(m, decisions)
               for m in models]
    dictionary = default_dictionary(models[0].obs_space)
    return ModelClass(rebuilt, blocks, dictionary)


def _reindex_decisions(model: Model, decisions: FiniteSpace) -> Model:
    if len(model.decisions) != len(decisions):
        raise SpaceMismatch(
            "hypothesis selection over non-statistical models needs matching decisions"
        )
    return Model(decisions, model.obs_space, model.rows)


#: Builders addressable by string id from CLI configs.
BUILDERS = {
    "mab": mab_class,
    "mab_canonical": lambda k: canonical_mab(int(k)),
    "contextual_bandit": contextual_bandit_class,
    "parity": lambda d, lam: parity_class(int(d), float(lam))[0],
    "linear": linear_model_class,
    "regression": regression_class,
}
