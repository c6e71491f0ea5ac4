"""Interactive learners emitting (decision, channel/query) actions.

Each learner is a sequential state machine driven by ``next_action()`` /
``observe()``: all randomness comes from counter-based streams derived
from the learner seed, and no internal state ever depends on anything but
the seed and the observation history.  Replaying a recorded observation
prefix therefore reproduces every action bit-for-bit, which is what the
privacy auditor checks.

Actions are JSON-able dicts:
    {"kind": "channel", "decision": i, "ell": [...], "fn": l, "alpha": a}
    {"kind": "direct", "decision": i}
    {"kind": "query", "query": j}
    {"kind": "skip"}
Observations fed back are: a sign for channel actions, an observation
index for direct actions, and a response vector for query actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dec import SearchConfig, _constrained_search, offset_pac_dec_ldp
from .errors import ConfigError, Infeasible, RangeError, StructureError
from .estimators import (
    OnlineMirrorDescent,
    VovkAggregator,
    omd_bound,
    vovk_bound,
)
from .models import Model, ModelClass, QueryModelClass
from .prob import FiniteDist, FiniteSpace, ScalarFn
from .rng import stream

_WEIGHT_CACHE_DECIMALS = 3


@dataclass(frozen=True)
class LearnerConfig:
    """Parameters shared by all algorithms; unused fields are ignored."""

    algorithm: str
    T: int
    delta: float = 0.1
    alpha: float = 1.0
    gamma: float = 8.0  # exploration weight (exploration-by-optimization)
    slack: float = 0.0  # information-set slack
    tau: float = 0.0  # query tolerance
    c0: float = 16.0  # query budget constant
    oracle: str = "vovk"
    est_scale: float = 20.0
    c_kl: float = 1.0
    clip_scale: float = 1.0  # multiplier on the default ln(T) clip level
    solver_iters: int = 50
    search: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError("horizon must be at least 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("failure probability must lie in (0,1)")
        if self.alpha <= 0:
            raise ConfigError("privacy level must be positive")

    def to_json(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "algorithm", "T", "delta", "alpha", "gamma", "slack", "tau", "c0",
            "oracle", "est_scale", "c_kl", "clip_scale", "solver_iters", "seed",
        )}
        return out

    @staticmethod
    def from_json(payload: dict) -> "LearnerConfig":
        return LearnerConfig(**payload)


@dataclass
class Round:
    """One recorded interaction round."""

    action: dict
    obs: object = None
    p: np.ndarray | None = None
    q: np.ndarray | None = None
    cert: float | None = None
    internals: dict = field(default_factory=dict)


@dataclass
class Transcript:
    """Complete record of one run: input to auditing and accounting."""

    algorithm: str
    seed: int
    config: dict
    rounds: list
    p_hat: np.ndarray
    decision_labels: tuple
    instance: dict | None = None
    env: list | None = None

    def to_json(self) -> dict:
        rounds = []
        for r in self.rounds:
            entry = {"action": _action_to_json(r.action)}
            if r.obs is not None:
                entry["obs"] = _obs_to_json(r.obs)
            if r.cert is not None:
                entry["cert"] = float(r.cert)
            if r.p is not None:
                entry["p"] = [float(v) for v in r.p]
            if r.q is not None:
                entry["q"] = [float(v) for v in np.asarray(r.q).ravel()]
            rounds.append(entry)
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "config": self.config,
            "instance": self.instance,
            "rounds": rounds,
            "p_hat": [float(v) for v in self.p_hat],
        }

    @staticmethod
    def from_json(payload: dict) -> "Transcript":
        rounds = []
        for entry in payload["rounds"]:
            rounds.append(
                Round(
                    action=_action_from_json(entry["action"]),
                    obs=_obs_from_json(entry.get("obs")),
                    cert=entry.get("cert"),
                    p=None if "p" not in entry else np.asarray(entry["p"]),
                    q=None if "q" not in entry else np.asarray(entry["q"]),
                )
            )
        return Transcript(
            algorithm=payload["algorithm"],
            seed=payload["seed"],
            config=payload["config"],
            rounds=rounds,
            p_hat=np.asarray(payload["p_hat"], dtype=float),
            decision_labels=(),
            instance=payload.get("instance"),
        )


def _action_to_json(action: dict) -> dict:
    out = dict(action)
    if "ell" in out:
        out["ell"] = [float(v) for v in out["ell"]]
    return out


def _action_from_json(payload: dict) -> dict:
    return dict(payload)


def _obs_to_json(obs):
    if isinstance(obs, np.ndarray):
        return {"vec": [float(v) for v in obs]}
    if isinstance(obs, (np.integer, int)):
        return int(obs)
    return obs


def _obs_from_json(payload):
    if isinstance(payload, dict) and "vec" in payload:
        return np.asarray(payload["vec"], dtype=float)
    return payload


def actions_equal(a: dict, b: dict) -> bool:
    if a.get("kind") != b.get("kind"):
        return False
    for key in ("decision", "query", "fn"):
        if a.get(key) != b.get(key):
            return False
    ea, eb = a.get("ell"), b.get("ell")
    if ea is not None or eb is not None:
        # recomputed functionals are bitwise identical (pure float paths,
        # and JSON round-trips of repr are exact), so compare exactly
        if ea is None or eb is None or len(ea) != len(eb):
            return False
        if list(ea) != list(eb):
            return False
    return True


# ---------------------------------------------------------------------------
# Information-set structures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InfoSetStructure:
    """A cover of candidate models by anchored subsets.

    Each entry pairs a finite model subset with an anchor decision; a
    posterior over entries is what the exploration-by-optimization
    learner maintains.  Values must be induced by a reward function so
    that the anchored regret is affine over model mixtures.
    """

    kind: str
    sets: tuple  # tuple of tuples of Model
    anchors: tuple  # decision indices
    prior: np.ndarray
    decisions: FiniteSpace
    obs_space: FiniteSpace
    value_cls: ModelClass  # supplies the reward-based value function

    def __post_init__(self):
        if len(self.sets) != len(self.anchors):
            raise StructureError("one anchor per information set required")
        if not self.sets:
            raise StructureError("information-set structure cannot be empty")
        if not any(self.sets):
            raise StructureError("every information set is empty")
        if self.prior.shape != (len(self.sets),):
            raise StructureError("prior must weight exactly the information sets")
        if abs(self.prior.sum() - 1.0) > 1e-9 or np.any(self.prior < 0):
            raise StructureError("prior must be a probability vector")
        for anchor in self.anchors:
            if not 0 <= anchor < len(self.decisions):
                raise StructureError("anchor decision out of range")
        for subset in self.sets:
            for m in subset:
                if m.decisions != self.decisions or m.obs_space != self.obs_space:
                    raise StructureError("member model on mismatched spaces")

    def covers(self, model: Model) -> bool:
        return any(any(m == model for m in subset) for subset in self.sets)


def model_based_structure(cls: ModelClass) -> InfoSetStructure:
    """One singleton set per class member, anchored at its optimal decision."""
    sets = tuple((m,) for m in cls.models)
    anchors = tuple(cls.optimal_decision(i) for i in range(len(cls)))
    prior = np.full(len(cls), 1.0 / len(cls))
    return InfoSetStructure(
        "model_based", sets, anchors, prior, cls.decisions, cls.obs_space, cls
    )


def policy_based_structure(cls: ModelClass, slack: float) -> InfoSetStructure:
    """One set per decision, holding the models for which it is slack-good."""
    sets, anchors = [], []
    for d in range(len(cls.decisions)):
        members = tuple(
            cls.models[i] for i in range(len(cls)) if cls.loss_table[i, d] <= slack + 1e-12
        )
        sets.append(members)
        anchors.append(d)
    nonempty = [i for i, s in enumerate(sets) if s]
    if not nonempty:
        raise StructureError("no decision is slack-good for any model")
    sets = tuple(sets[i] for i in nonempty)
    anchors = tuple(anchors[i] for i in nonempty)
    prior = np.full(len(sets), 1.0 / len(sets))
    return InfoSetStructure(
        "policy_based", sets, anchors, prior, cls.decisions, cls.obs_space, cls
    )


def value_based_structure(cls: ModelClass, slack: float) -> InfoSetStructure:
    """Regression cover: sets collect models whose regression function is close.

    Requires a statistical class over (context, sign) observations whose
    decisions index the candidate functions; membership of model M in the
    set of function f is  E over M's covariate law of |f_M - f| <= slack.
    """
    f_model, nu_model = _regression_profiles(cls)
    sets, anchors = [], []
    for j in range(len(cls.decisions)):
        members = []
        for i in range(len(cls)):
            gap = float(np.dot(nu_model[i], np.abs(f_model[i] - f_model[j])))
            if gap <= slack + 1e-12:
                members.append(cls.models[i])
        sets.append(tuple(members))
        anchors.append(j)
    nonempty = [i for i, s in enumerate(sets) if s]
    sets = tuple(sets[i] for i in nonempty)
    anchors = tuple(anchors[i] for i in nonempty)
    prior = np.full(len(sets), 1.0 / len(sets))
    return InfoSetStructure(
        "value_based", sets, anchors, prior, cls.decisions, cls.obs_space, cls
    )


def _regression_profiles(cls: ModelClass):
    """Per-model covariate marginals and conditional means on (x, sign) spaces."""
    labels = cls.obs_space.labels
    xs = []
    for lab in labels:
        if not (isinstance(lab, tuple) and len(lab) == 2 and lab[1] in (-1, +1)):
            raise StructureError("value-based cover needs (context, sign) observations")
        if lab[0] not in xs:
            xs.append(lab[0])
    idx_minus = [labels.index((x, -1)) for x in xs]
    idx_plus = [labels.index((x, +1)) for x in xs]
    f_model, nu_model = [], []
    for m in cls.models:
        row = m.rows[0]
        nu = row[idx_minus] + row[idx_plus]
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.where(nu > 0, (row[idx_plus] - row[idx_minus]) / np.where(nu > 0, nu, 1.0), 0.0)
        f_model.append(f)
        nu_model.append(nu)
    return np.asarray(f_model), np.asarray(nu_model)


def hybrid_structure(
    cls: ModelClass, sets: Sequence[Sequence[Model]], anchors: Sequence[int],
    prior: Sequence[float] | None = None,
) -> InfoSetStructure:
    """Raw constructor for constraint-list covers (contaminated neighborhoods etc.)."""
    sets = tuple(tuple(s) for s in sets)
    anchors = tuple(int(a) for a in anchors)
    prior_arr = (
        np.full(len(sets), 1.0 / len(sets)) if prior is None else np.asarray(prior, float)
    )
    return InfoSetStructure(
        "hybrid", sets, anchors, prior_arr, cls.decisions, cls.obs_space, cls
    )


# ---------------------------------------------------------------------------
# LDP estimation-to-decision
# ---------------------------------------------------------------------------


def _make_oracle(cls: ModelClass, cfg: LearnerConfig, n_rounds: int):
    if cfg.oracle == "vovk":
        return VovkAggregator(cls, cfg.alpha)
    if cfg.oracle == "omd":
        if not all(m.is_statistical for m in cls.models):
            raise ConfigError("mirror descent requires a statistical class")
        reference = cls.mixture(np.full(len(cls), 1.0 / len(cls))).dist_at(0)
        return OnlineMirrorDescent(reference, cfg.c_kl, n_rounds, cfg.alpha, cls)
    raise ConfigError(f"unknown oracle id {cfg.oracle!r}")


def _oracle_means(oracle, cls: ModelClass) -> np.ndarray:
    """Predicted (decision, functional) mean matrix of the current estimate."""
    if isinstance(oracle, VovkAggregator):
        return oracle.predicted_means()
    pred = oracle.predict()
    fn_mat = np.stack([fn.values for fn in cls.dictionary.entries])
    row = fn_mat @ pred.mass
    return np.tile(row, (len(cls.decisions), 1))


def _oracle_mixture_key(oracle, cls: ModelClass):
    if isinstance(oracle, VovkAggregator):
        w = np.round(oracle.weights, _WEIGHT_CACHE_DECIMALS)
        total = w.sum()
        if total <= 0:
            w = np.full(len(cls), 1.0 / len(cls))
        else:
            w = w / total
        return tuple(float(v) for v in w), ("mixture", w)
    pred = oracle.predict()
    vec = np.round(pred.mass, _WEIGHT_CACHE_DECIMALS)
    total = vec.sum()
    vec = vec / total if total > 0 else pred.mass
    return tuple(float(v) for v in vec), ("dist", vec)


def _reference_model(cls: ModelClass, tag) -> Model:
    kind, vec = tag
    if kind == "mixture":
        return cls.mixture(vec)
    return Model(cls.decisions, cls.obs_space, np.asarray(vec, dtype=float))


def e2d_objective_solve(
    cls: ModelClass,
    ref: Model,
    eps_bar: float,
    gamma_grid: Sequence[float],
):
    """Lagrangian sweep for the per-round exploration objective.

    Sweeps the offset LP over an ascending geometric grid, stopping at the
    smallest weight whose certificate's divergence term (the largest
    information term over models achieving the sup) is within eps_bar^2.
    Every swept weight certifies  t* + gamma * eps_bar^2  as a bound on
    the loss of any model satisfying the information constraint at its q,
    so the best certified candidate from the sweep is returned.
    """
    eps_sq = eps_bar * eps_bar
    n_pi, n_l = len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref).reshape(len(cls), n_pi * n_l)
    fallback = None
    chosen = None
    for gamma in gamma_grid:
        cert = offset_pac_dec_ldp(cls, ref, gamma)
        value = cert.value + gamma * eps_sq
        if fallback is None or value < fallback[0]:
            fallback = (value, cert, gamma)
        achieved = cls.loss_table @ cert.p.mass - gamma * (div @ cert.q.mass)
        active = achieved >= achieved.max() - 1e-9
        active_div = float((div[active] @ cert.q.mass).max())
        if active_div <= eps_sq:
            chosen = (value, cert, gamma)
            break
    if chosen is None:  # no grid point certified feasible; best bound still valid
        chosen = fallback
    value, cert, gamma = chosen
    q_mat = cert.q.mass.reshape(n_pi, n_l)
    return cert.p.mass, q_mat, float(value), gamma


class LdpE2D:
    """Two-phase estimation-to-decision learner over binary channels."""

    def __init__(self, cls: ModelClass, cfg: LearnerConfig, solve_cache: dict | None = None):
        self.cls = cls
        self.cfg = cfg
        self.K = math.ceil(math.log(2.0 / cfg.delta))
        self.N = cfg.T // (self.K + 1)
        if cfg.T < 2 * (self.K + 1):
            raise ConfigError("horizon leaves no room for the refining phase")
        delta_inner = cfg.delta / (4.0 * self.K)
        if cfg.oracle == "omd":
            est = omd_bound(cfg.c_kl, self.N, delta_inner, cfg.alpha, cfg.est_scale)
        else:
            est = vovk_bound(len(cls), delta_inner, cfg.alpha, cfg.est_scale)
        self.est_bound = est
        self.eps_bar = 8.0 * math.sqrt(est / self.N)
        self._cache = {} if solve_cache is None else solve_cache
        self._oracle = _make_oracle(cls, cfg, self.N)
        self._explore_rng = stream(cfg.seed, "explore")
        self._refine_rng = stream(cfg.seed, "refine")
        self.rounds: list[Round] = []
        self._t = 0
        self._phase_rounds: list[tuple] = []  # (p, q_mat, cert, mhat_means)
        self._picks: np.ndarray | None = None
        self._batch_oracle = None
        self._batch_means_sum = None
        self._batch_count = 0
        self._batch_records: list[tuple] = []  # (t_k, qmat, mhat_means_tk, batch_mean)
        self._p_hat: np.ndarray | None = None
        self.chosen_round: int | None = None
        self.cert_value: float | None = None
        self._pending: Round | None = None

    # -- helpers ------------------------------------------------------------

    def _solve(self, oracle):
        key, tag = _oracle_mixture_key(oracle, self.cls)
        hit = self._cache.get(key)
        if hit is None:
            ref = _reference_model(self.cls, tag)
            p, q_mat, value, gamma = e2d_objective_solve(
                self.cls, ref, self.eps_bar, self.cfg.search.gamma_grid
            )
            flat = q_mat.ravel()
            cdf = np.cumsum(flat / flat.sum())
            hit = (p, q_mat, value, gamma, cdf)
            self._cache[key] = hit
        return hit

    @staticmethod
    def _sample_pair(cdf: np.ndarray, n_l: int, rng) -> tuple[int, int]:
        idx = int(np.searchsorted(cdf, rng.random(), side="right"))
        idx = min(idx, cdf.size - 1)
        return idx // n_l, idx % n_l

    def _channel_action(self, pi_idx: int, l_idx: int) -> dict:
        fn = self.cls.dictionary[l_idx]
        return {
            "kind": "channel",
            "decision": int(pi_idx),
            "fn": int(l_idx),
            "ell": [float(v) for v in fn.values],
            "alpha": self.cfg.alpha,
        }

    # -- protocol -----------------------------------------------------------

    def next_action(self) -> dict:
        t = self._t
        if t >= self.cfg.T:
            raise ConfigError("horizon exhausted")
        n_l = len(self.cls.dictionary)
        if t < self.N:  # exploration
            means = _oracle_means(self._oracle, self.cls)
            p, q_mat, value, _gamma, cdf = self._solve(self._oracle)
            pi_idx, l_idx = self._sample_pair(cdf, n_l, self._explore_rng)
            self._phase_rounds.append((p, q_mat, value, means, cdf))
            rnd = Round(
                action=self._channel_action(pi_idx, l_idx),
                p=p,
                q=q_mat,
                cert=value,
                internals={"mhat_means": means, "phase": "explore"},
            )
        elif t < (self.K + 1) * self.N:  # refining batches
            k = (t - self.N) // self.N
            j = (t - self.N) % self.N
            if j == 0:
                if self._picks is None:
                    self._picks = self._refine_rng.integers(0, self.N, size=self.K)
                if self._batch_oracle is not None:
                    self._finish_batch(k - 1)
                self._batch_oracle = _make_oracle(self.cls, self.cfg, self.N)
                self._batch_means_sum = np.zeros(
                    (len(self.cls.decisions), len(self.cls.dictionary))
                )
                self._batch_count = 0
                self._batch_rng = stream(self.cfg.seed, "batch", k)
            t_k = int(self._picks[k])
            _p, q_mat, _v, _means, cdf = self._phase_rounds[t_k]
            means_now = _oracle_means(self._batch_oracle, self.cls)
            self._batch_means_sum += means_now
            self._batch_count += 1
            pi_idx, l_idx = self._sample_pair(cdf, n_l, self._batch_rng)
            rnd = Round(
                action=self._channel_action(pi_idx, l_idx),
                q=q_mat,
                internals={"mhat_means": means_now, "phase": "refine", "batch": k},
            )
        else:  # leftover rounds from flooring: no observation cost
            last_p = self._phase_rounds[-1][0]
            rnd = Round(action={"kind": "skip"}, p=last_p, internals={"phase": "skip"})
        self._pending = rnd
        self.rounds.append(rnd)
        self._t += 1
        return rnd.action

    def observe(self, obs) -> None:
        rnd = self._pending
        if rnd is None or rnd.action["kind"] == "skip":
            raise ConfigError("no observation expected")
        o = int(obs)
        pi_idx = rnd.action["decision"]
        l_idx = rnd.action["fn"]
        rnd.obs = o
        phase = rnd.internals["phase"]
        oracle = self._oracle if phase == "explore" else self._batch_oracle
        if isinstance(oracle, VovkAggregator):
            oracle.update(pi_idx, l_idx, o)
        else:
            oracle.update(self.cls.dictionary[l_idx], o)
        self._pending = None

    def _finish_batch(self, k: int) -> None:
        t_k = int(self._picks[k])
        q_mat = self._phase_rounds[t_k][1]
        mhat_tk = self._phase_rounds[t_k][3]
        batch_mean = self._batch_means_sum / max(self._batch_count, 1)
        self._batch_records.append((t_k, q_mat, mhat_tk, batch_mean))

    def finish(self) -> np.ndarray:
        if self._t < (self.K + 1) * self.N:
            raise ConfigError("run is not complete")
        if self._batch_oracle is not None and len(self._batch_records) < self.K:
            self._finish_batch(self.K - 1)
        scores = []
        for t_k, q_mat, mhat_tk, batch_mean in self._batch_records:
            gap = (mhat_tk - batch_mean) ** 2
            scores.append(float(np.sum(q_mat * gap)))
        k_hat = int(np.argmin(scores))
        t_star = self._batch_records[k_hat][0]
        self.chosen_round = t_star
        self.cert_value = self._phase_rounds[t_star][2]
        self._p_hat = self._phase_rounds[t_star][0]
        return self._p_hat


# ---------------------------------------------------------------------------
# Exploration by optimization with information sets
# ---------------------------------------------------------------------------


class ExoPlus:
    """Per-round joint minimax over exploit/explore distributions and weights.

    Maintains an exponential-weights posterior over information sets; each
    round solves the exploration objective by alternating an exact LP in
    the distributions with a closed-form clipped log-posterior update of
    the weight function, and records the exactly-enumerated achieved
    objective value as that round's certificate.
    """

    def __init__(self, info: InfoSetStructure, cfg: LearnerConfig, option: str = "pac"):
        if option not in ("pac", "reg"):
            raise RangeError(f"unknown option {option!r}")
        self.info = info
        self.cfg = cfg
        self.option = option
        self.n_psi = len(info.sets)
        self.n_pi = len(info.decisions)
        self.n_o = len(info.obs_space)
        self.clip = cfg.clip_scale * math.log(max(cfg.T, 3))
        pairs = []
        for s_idx, subset in enumerate(info.sets):
            for m in subset:
                pairs.append((s_idx, m))
        if not pairs:
            raise StructureError("no candidate models to optimize against")
        self.pairs = pairs
        cls = info.value_cls
        self.pair_loss = np.stack(
            [cls.value_row(m)[info.anchors[s]] - cls.value_row(m) for s, m in pairs]
        )
        self.pair_rows = np.stack([m.rows for _s, m in pairs])  # (I, Pi, O)
        self.pair_set = np.array([s for s, _m in pairs])
        self.log_w = np.log(info.prior + 1e-300)
        self._rng = stream(cfg.seed, "exo")
        self.rounds: list[Round] = []
        self._p_sum = np.zeros(self.n_pi)
        self._t = 0
        self._pending: Round | None = None
        self.cert_sum = 0.0
        self._solve_cache: dict = {}

    # -- solver -------------------------------------------------------------

    def _weights(self) -> np.ndarray:
        w = np.exp(self.log_w - self.log_w.max())
        return w / w.sum()

    def _xi_from_posterior(self, post: np.ndarray, w: np.ndarray) -> np.ndarray:
        """xi(psi; pi, o) = (1/2) clip of log(post/w) to the clip level."""
        with np.errstate(divide="ignore"):
            ratio = np.log(post) - np.log(w)[:, None, None]
        return 0.5 * np.clip(ratio, -self.clip, self.clip)

    def _posterior_from_mixture(self, mu: np.ndarray, w: np.ndarray) -> np.ndarray:
        """post[psi, pi, o] proportional to sum of mu_i * M_i(pi)[o] within psi."""
        joint = np.zeros((self.n_psi, self.n_pi, self.n_o))
        np.add.at(joint, self.pair_set, mu[:, None, None] * self.pair_rows)
        total = joint.sum(axis=0, keepdims=True)
        safe = np.where(total > 0, total, 1.0)
        post = joint / safe
        # rounds with no mass anywhere: fall back to the current weights
        post = np.where(total > 0, post, w[:, None, None])
        return post

    def _objective_rows(self, w: np.ndarray, xi: np.ndarray):
        """Per-pair linear coefficients of the objective in (p, q)."""
        exp_xi = np.exp(xi)  # (psi, pi, o)
        S = np.tensordot(w, exp_xi, axes=1)  # (pi, o)
        ratio = S[None, :, :] / exp_xi  # (psi, pi, o), S / e^{xi(psi)}
        return np.einsum("ipo,ipo->ip", self.pair_rows, 1.0 - ratio[self.pair_set])

    def _solve_round(self, w: np.ndarray):
        from .lp import simplex_minimax

        key = tuple(np.round(w, _WEIGHT_CACHE_DECIMALS))
        hit = self._solve_cache.get(key)
        if hit is not None:
            return hit
        gamma = self.cfg.gamma
        mu0 = w[self.pair_set]
        counts = np.bincount(self.pair_set, minlength=self.n_psi)[self.pair_set]
        mu0 = mu0 / counts
        mu0 = mu0 / mu0.sum()
        xi = self._xi_from_posterior(self._posterior_from_mixture(mu0, w), w)
        best = None
        last_val = math.inf
        for _ in range(self.cfg.solver_iters):
            h = self._objective_rows(w, xi)
            if self.option == "pac":
                rows = np.hstack([self.pair_loss, -gamma * h])
                sol = simplex_minimax(rows, [self.n_pi, self.n_pi])
                p, q = sol.blocks
            else:
                rows = self.pair_loss - gamma * h
                sol = simplex_minimax(rows, [self.n_pi])
                p = q = sol.blocks[0]
            value = sol.value
            if best is None or value < best[0] - 1e-15:
                best = (value, p, q, xi)
            if abs(last_val - value) < 1e-9:
                break
            last_val = value
            xi = self._xi_from_posterior(
                self._posterior_from_mixture(sol.adversary, w), w
            )
        value, p, q, xi = best
        hit = (p, q, xi)
        self._solve_cache[key] = hit
        return hit

    def _exact_certificate(self, w, p, q, xi) -> float:
        h = self._objective_rows(w, xi)
        achieved = self.pair_loss @ p - self.cfg.gamma * (h @ q)
        return float(achieved.max())

    # -- protocol -----------------------------------------------------------

    def next_action(self) -> dict:
        if self._t >= self.cfg.T:
            raise ConfigError("horizon exhausted")
        w = self._weights()
        p, q, xi = self._solve_round(w)
        # the certificate is always evaluated at the exact posterior, even
        # though the solve may be served from the rounded-posterior cache
        cert = self._exact_certificate(w, p, q, xi)
        pi_idx = int(self._rng.choice(self.n_pi, p=q / q.sum()))
        rnd = Round(
            action={"kind": "direct", "decision": pi_idx},
            p=p,
            q=q,
            cert=cert,
            internals={"xi": xi, "w": w},
        )
        self._pending = rnd
        self.rounds.append(rnd)
        self._p_sum += p
        self.cert_sum += cert
        self._t += 1
        return rnd.action

    def observe(self, obs) -> None:
        rnd = self._pending
        if rnd is None:
            raise ConfigError("no observation expected")
        o_idx = int(obs)
        rnd.obs = o_idx
        xi = rnd.internals["xi"]
        self.log_w = self.log_w + xi[:, rnd.action["decision"], o_idx]
        self.log_w -= self.log_w.max()
        self._pending = None

    def finish(self) -> np.ndarray:
        return self._p_sum / max(self._t, 1)

    # -- post-hoc accounting --------------------------------------------------

    def good_set_log_prior(self, realized_rows: Sequence[np.ndarray], slack: float) -> float:
        """log(1 / prior mass) of the sets covering the realized model sequence.

        A set qualifies when it contains every realized per-round model and
        its anchor is slack-optimal under the average realized model.
        """
        cls = self.info.value_cls
        avg = Model(self.info.decisions, self.info.obs_space,
                    np.mean(np.stack(realized_rows), axis=0))
        avg_values = cls.value_row(avg)
        mass = 0.0
        for s_idx, subset in enumerate(self.info.sets):
            members = [m.rows for m in subset]
            contains_all = all(
                any(np.allclose(r, mm, atol=1e-10) for mm in members)
                for r in realized_rows
            )
            if not contains_all:
                continue
            if avg_values.max() - avg_values[self.info.anchors[s_idx]] <= slack + 1e-9:
                mass += float(self.info.prior[s_idx])
        if mass <= 0:
            return math.inf
        return -math.log(mass)


# ---------------------------------------------------------------------------
# Brute force over the fractional cover
# ---------------------------------------------------------------------------


class BruteForceDC:
    """Sample decisions from the fractional-cover optimum, test each in batches."""

    def __init__(self, cls: ModelClass, cfg: LearnerConfig, slack: float | None = None):
        from .dec import fractional_covering

        if cls.loss_spec.kind != "reward":
            raise ConfigError("brute force requires a reward-based loss")
        self.cls = cls
        self.cfg = cfg
        self.slack = cfg.slack if slack is None else slack
        n_frac, p_star = fractional_covering(cls, self.slack)
        if not math.isfinite(n_frac):
            raise Infeasible("some model has no slack-good decision")
        self.n_frac = n_frac
        self.p_star = p_star
        self.N = math.ceil(n_frac * math.log(1.0 / cfg.delta))
        self.J = cfg.T // self.N
        if self.J < 1:
            raise ConfigError("horizon shorter than the number of probes")
        self._rng = stream(cfg.seed, "bruteforce")
        self.rounds: list[Round] = []
        self._t = 0
        self._probe_decisions: list[int] = []
        self._sums = np.zeros(self.N)
        self._pending: Round | None = None
        self._p_hat: np.ndarray | None = None

    def next_action(self) -> dict:
        if self._t >= self.cfg.T:
            raise ConfigError("horizon exhausted")
        if self._t >= self.N * self.J:
            rnd = Round(action={"kind": "skip"}, internals={"phase": "skip"})
            self.rounds.append(rnd)
            self._pending = rnd
            self._t += 1
            return rnd.action
        k = self._t // self.J
        if self._t % self.J == 0:
            idx = int(self._rng.choice(len(self.cls.decisions), p=self.p_star.mass))
            self._probe_decisions.append(idx)
            col = self.cls.loss_spec.reward.values[:, idx]
            self._template = {
                "kind": "channel",
                "decision": idx,
                "fn": None,
                "ell": [float(v) for v in col],
                "alpha": self.cfg.alpha,
            }
        rnd = Round(action=dict(self._template), internals={"batch": k})
        self._pending = rnd
        self.rounds.append(rnd)
        self._t += 1
        return rnd.action

    def observe(self, obs) -> None:
        rnd = self._pending
        if rnd is None or rnd.action["kind"] == "skip":
            raise ConfigError("no observation expected")
        rnd.obs = int(obs)
        self._sums[rnd.internals["batch"]] += int(obs)
        self._pending = None

    def finish(self) -> np.ndarray:
        means = self._sums / self.J
        k_hat = int(np.argmax(means))
        pi_hat = self._probe_decisions[k_hat]
        p = np.zeros(len(self.cls.decisions))
        p[pi_hat] = 1.0
        self._p_hat = p
        return p

    def concentration_bound(self) -> float:
        """slack + (2/c_alpha) * sqrt(2 ln(2N/delta) / J)."""
        c = 1.0 - math.exp(-self.cfg.alpha)
        return self.slack + (2.0 / c) * math.sqrt(
            2.0 * math.log(2.0 * self.N / self.cfg.delta) / self.J
        )


# ---------------------------------------------------------------------------
# Query-based estimation-to-decision
# ---------------------------------------------------------------------------


class SqE2D:
    """Elimination-based learner against tolerance-bounded query oracles."""

    def __init__(self, qclass: QueryModelClass, cfg: LearnerConfig,
                 solve_cache: dict | None = None):
        self.qc = qclass
        self.cfg = cfg
        self.K = math.ceil(math.log(2.0 / cfg.delta))
        if cfg.T < 4 * self.K:
            raise ConfigError("horizon leaves no room for the refining batches")
        self.T0 = cfg.T // 2
        self.N = cfg.T // (2 * self.K)
        self.gamma_bar = cfg.c0 * max(
            math.log(len(qclass)) / cfg.T, math.log(1.0 / cfg.delta) / self.N
        )
        self.surviving = np.ones(len(qclass), dtype=bool)
        self._cache = {} if solve_cache is None else solve_cache
        self._rng = stream(cfg.seed, "sq")
        self._refine_rng = stream(cfg.seed, "sq-refine")
        self.rounds: list[Round] = []
        self._t = 0
        self._pending: Round | None = None
        self._explored: list[tuple] = []  # (p, q) per exploration round
        self._picks: np.ndarray | None = None
        self._batch_err_sum = 0.0
        self._batch_n = 0
        self._k_star = 0
        self._stopped = False
        self._batch_index = -1
        self.cert_value: float | None = None

    def _solve(self):
        from .dec import RandomizedQueryModel, query_error_matrix

        key = self.surviving.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            members = np.flatnonzero(self.surviving)
            ref = RandomizedQueryModel.from_class(self.qc, members)
            err = query_error_matrix(self.qc, ref, 2.0 * self.cfg.tau)
            value, p, q, witness, _mode = _constrained_search(
                self.qc.loss_table, err, self.gamma_bar, self.cfg.search
            )
            hit = (p, q, float(value), np.cumsum(q / q.sum()))
            self._cache[key] = hit
        return hit

    def _membership_error(self, query_idx: int, v: np.ndarray) -> float:
        members = np.flatnonzero(self.surviving)
        if members.size == 0:
            return 0.0
        far = 0
        for m in members:
            if self.qc.distance(self.qc.responses[m, query_idx], v) > self.cfg.tau + 1e-12:
                far += 1
        return far / members.size

    def next_action(self) -> dict:
        if self._t >= self.cfg.T:
            raise ConfigError("horizon exhausted")
        if self._t < self.T0:
            p, q, value, cdf = self._solve()
            query_idx = min(
                int(np.searchsorted(cdf, self._rng.random(), side="right")), cdf.size - 1
            )
            rnd = Round(
                action={"kind": "query", "query": query_idx},
                p=p,
                q=q,
                cert=value,
                internals={"phase": "explore"},
            )
            self._explored.append((p, q, value, cdf))
        elif not self._stopped and self._t < self.T0 + self.K * self.N:
            j = (self._t - self.T0) % self.N
            if j == 0:
                if self._picks is None:
                    self._picks = self._refine_rng.integers(0, self.T0, size=self.K)
                self._batch_index += 1
                self._batch_err_sum = 0.0
                self._batch_n = 0
            t_k = int(self._picks[self._batch_index])
            cdf = self._explored[t_k][3]
            query_idx = min(
                int(np.searchsorted(cdf, self._rng.random(), side="right")), cdf.size - 1
            )
            rnd = Round(
                action={"kind": "query", "query": query_idx},
                internals={"phase": "refine", "batch": self._batch_index, "last": j == self.N - 1},
            )
        else:
            rnd = Round(action={"kind": "skip"}, internals={"phase": "skip"})
        self._pending = rnd
        self.rounds.append(rnd)
        self._t += 1
        return rnd.action

    def observe(self, obs) -> None:
        rnd = self._pending
        if rnd is None or rnd.action["kind"] == "skip":
            raise ConfigError("no observation expected")
        v = np.asarray(obs, dtype=float)
        query_idx = rnd.action["query"]
        rnd.obs = v
        if rnd.internals["phase"] == "refine":
            self._batch_err_sum += self._membership_error(query_idx, v)
            self._batch_n += 1
        # eliminate models inconsistent with the response at tolerance tau
        for m in np.flatnonzero(self.surviving):
            if self.qc.distance(self.qc.responses[m, query_idx], v) > self.cfg.tau + 1e-12:
                self.surviving[m] = False
        if rnd.internals["phase"] == "refine" and rnd.internals.get("last"):
            if self._batch_err_sum / max(self._batch_n, 1) < self.gamma_bar:
                self._k_star = self._batch_index
                self._stopped = True
        self._pending = None

    def finish(self) -> np.ndarray:
        if self._picks is None:
            raise ConfigError("run is not complete")
        t_star = int(self._picks[self._k_star])
        p, _q, value, _cdf = self._explored[t_star]
        self.cert_value = value
        return p


ALGORITHMS = {
    "ldp_e2d": LdpE2D,
    "exo_plus": ExoPlus,
    "brute_force_dc": BruteForceDC,
    "sq_e2d": SqE2D,
}
