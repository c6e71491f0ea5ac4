"""Interaction protocols, adversary strategies, accounting, and auditing.

Environments answer learner actions round by round.  Beyond the honest
stationary protocol there are: per-round contamination (an adversary
replaces the observation with probability beta), tolerance-bounded query
oracles (truthful, or pulling responses toward a reference), and
adversarially scheduled contexts.  Every environment records the
effective per-round observation law it actually played, which is what
risk/regret accounting and the contamination-aware certificates consume.

Adversary strategies here instantiate the constraint sets, they do not
claim worst-case optimality: computing the worst adversary is itself the
minimax problem the solvers address.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import Channel, apply_channel, binary_channel, dp_level
from .errors import ConfigError, ProtocolError, RangeError
from .learners import ALGORITHMS, LearnerConfig, Round, Transcript, actions_equal
from .models import Model, ModelClass, QueryModelClass
from .prob import FiniteDist, ScalarFn
from .rng import stream, unit

_DP_SLACK = 1e-12


def _channel_from_action(action: dict, obs_space) -> Channel:
    fn = ScalarFn(obs_space, action["ell"])
    return binary_channel(fn, action["alpha"])


def _sample_cdf(cdf: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cdf, u, side="right"))


def _outcome_law(action: dict, obs_space, rows: np.ndarray):
    """(labels, cdf) of the observation produced for this action by ``rows``."""
    if action["kind"] == "channel":
        channel = _channel_from_action(action, obs_space)
        out = apply_channel(channel, FiniteDist(obs_space, rows[action["decision"]]))
        return channel.output.labels, np.cumsum(out.mass)
    if action["kind"] == "direct":
        return None, np.cumsum(rows[action["decision"]])
    raise ProtocolError(f"cannot answer {action['kind']!r} actions")


def _action_key(action: dict):
    if action["kind"] == "channel":
        return ("ch", action["decision"], action["alpha"], tuple(action["ell"]))
    return ("d", action.get("decision"))


class StationaryEnv:
    """Honest environment: observations follow one fixed model."""

    def __init__(self, cls: ModelClass, truth_idx: int, seed: int):
        self.cls = cls
        self.truth_idx = truth_idx
        self.truth = cls.models[truth_idx]
        self.seed = seed
        self.t = 0
        self._laws: dict = {}

    def step(self, action: dict):
        t = self.t
        self.t += 1
        key = _action_key(action)
        law = self._laws.get(key)
        if law is None:
            law = _outcome_law(action, self.cls.obs_space, self.truth.rows)
            self._laws[key] = law
        labels, cdf = law
        idx = _sample_cdf(cdf, unit(self.seed, "env", t))
        obs = labels[idx] if labels is not None else idx
        return obs, {"rows": self.truth.rows}


class HuberEnv:
    """Per-round contamination of the honest observation.

    With probability 1 - beta the round is honest; otherwise the strategy
    picks the observation:
      "fixed":  draw from a fixed contamination model of the class spaces;
      "greedy": emit the outcome the truth makes least likely (the most
                misleading single observation for a likelihood-based
                learner), ties to the lowest index.
    The effective per-round observation law (1-beta) * truth + beta *
    contamination is recorded for accounting.
    """

    def __init__(
        self,
        cls: ModelClass,
        truth_idx: int,
        beta: float,
        seed: int,
        strategy: str = "fixed",
        contamination: Model | None = None,
    ):
        if not 0.0 <= beta <= 1.0:
            raise RangeError("contamination rate must lie in [0,1]")
        if strategy not in ("fixed", "greedy"):
            raise RangeError(f"unknown contamination strategy {strategy!r}")
        if strategy == "fixed" and contamination is None:
            raise ConfigError("fixed contamination needs a contamination model")
        self.cls = cls
        self.truth_idx = truth_idx
        self.truth = cls.models[truth_idx]
        self.beta = beta
        self.strategy = strategy
        self.contamination = contamination
        self.seed = seed
        self.t = 0
        self.deviations = 0
        if strategy == "fixed":
            self.contam_rows = contamination.rows
        else:
            rows = np.zeros_like(self.truth.rows)
            least = np.argmin(self.truth.rows, axis=1)
            rows[np.arange(rows.shape[0]), least] = 1.0
            self.contam_rows = rows
        self.effective_rows = (1.0 - beta) * self.truth.rows + beta * self.contam_rows
        self._laws: dict = {}

    def step(self, action: dict):
        t = self.t
        self.t += 1
        deviate = unit(self.seed, "env", t, "coin") < self.beta
        if deviate:
            self.deviations += 1
        source = self.contam_rows if deviate else self.truth.rows
        key = (_action_key(action), bool(deviate))
        law = self._laws.get(key)
        if law is None:
            law = _outcome_law(action, self.cls.obs_space, source)
            self._laws[key] = law
        labels, cdf = law
        idx = _sample_cdf(cdf, unit(self.seed, "env", t, "obs"))
        obs = labels[idx] if labels is not None else idx
        return obs, {"rows": self.effective_rows}


class GqOracleEnv:
    """Tolerance-bounded query oracle for a deterministic query class.

    "truthful" returns the exact response.  "reference_pull" draws from a
    randomized reference and returns the draw whenever it is within the
    tolerance of the truth, falling back to the exact response otherwise,
    so every answer stays tau-correct by construction.
    """

    def __init__(
        self,
        qclass: QueryModelClass,
        truth_idx: int,
        tau: float,
        seed: int,
        strategy: str = "truthful",
        reference=None,
    ):
        if strategy not in ("truthful", "reference_pull"):
            raise RangeError(f"unknown oracle strategy {strategy!r}")
        if strategy == "reference_pull" and reference is None:
            raise ConfigError("reference_pull needs a randomized reference")
        if tau < 0:
            raise RangeError("tolerance must be non-negative")
        self.qc = qclass
        self.truth_idx = truth_idx
        self.tau = tau
        self.strategy = strategy
        self.reference = reference
        self.seed = seed
        self.t = 0
        if reference is not None:
            self._ref_cdf = np.cumsum(reference.weights)

    def step(self, action: dict):
        t = self.t
        self.t += 1
        if action["kind"] != "query":
            raise ProtocolError("query oracle only answers query actions")
        q_idx = action["query"]
        truth_v = self.qc.responses[self.truth_idx, q_idx]
        if self.strategy == "truthful":
            v = truth_v
        else:
            j = _sample_cdf(self._ref_cdf, unit(self.seed, "env", t))
            candidate = self.reference.tables[j, q_idx]
            v = candidate if self.qc.distance(candidate, truth_v) <= self.tau else truth_v
        if self.qc.distance(v, truth_v) > self.tau + 1e-12:  # pragma: no cover
            raise ProtocolError("oracle produced an out-of-tolerance response")
        return np.asarray(v, dtype=float), {"rows": None}


class AdversarialContextEnv:
    """Contextual protocol where the context schedule is adversarial.

    The strategy fixes the context sequence ("round_robin" cycles through
    the context space; "fixed" draws i.i.d. from a given distribution);
    rewards follow a fixed mean-reward table.  Observations are full
    (context, action, sign) triples of the contextual observation space.
    """

    def __init__(
        self,
        cls: ModelClass,
        contexts: Sequence,
        actions: Sequence,
        f_star: np.ndarray,
        seed: int,
        strategy: str = "round_robin",
        context_dist: FiniteDist | None = None,
        truth_idx: int = 0,
    ):
        if strategy not in ("round_robin", "fixed"):
            raise RangeError(f"unknown context strategy {strategy!r}")
        if strategy == "fixed" and context_dist is None:
            raise ConfigError("fixed context strategy needs a distribution")
        self.cls = cls
        self.contexts = tuple(contexts)
        self.actions = tuple(actions)
        self.f_star = np.asarray(f_star, dtype=float)
        self.strategy = strategy
        self.context_dist = context_dist
        self.seed = seed
        self.truth_idx = truth_idx
        self.t = 0

    def _effective_rows(self, x_idx: int) -> np.ndarray:
        rows = np.zeros((len(self.cls.decisions), len(self.cls.obs_space)))
        labels = self.cls.obs_space.labels
        for p_idx, pol in enumerate(self.cls.decisions.labels):
            a_idx = pol[x_idx]
            mean = self.f_star[x_idx, a_idx]
            x = self.contexts[x_idx]
            a = self.actions[a_idx]
            rows[p_idx, labels.index((x, a, +1))] = (1 + mean) / 2
            rows[p_idx, labels.index((x, a, -1))] = (1 - mean) / 2
        return rows

    def step(self, action: dict):
        t = self.t
        self.t += 1
        if self.strategy == "round_robin":
            x_idx = t % len(self.contexts)
        else:
            cdf = np.cumsum(self.context_dist.mass)
            x_idx = _sample_cdf(cdf, unit(self.seed, "env", t, "ctx"))
        rows = self._effective_rows(x_idx)
        labels, cdf = _outcome_law(action, self.cls.obs_space, rows)
        idx = _sample_cdf(cdf, unit(self.seed, "env", t, "obs"))
        obs = labels[idx] if labels is not None else idx
        return obs, {"rows": rows}


# ---------------------------------------------------------------------------
# Run driver and accounting
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    """Outcome of one seeded run: performance, bounds, and audit verdict."""

    risk: float
    regret: float
    bound: float
    cert_value: float
    audit_pass: bool
    transcript: Transcript
    est_cumulative: float = math.nan
    deviations: int = 0


def _truth_loss_row(instance, truth_idx: int) -> np.ndarray:
    return instance.loss_table[truth_idx]


def run(learner, env, instance, T: int, audit_instance=None) -> RunReport:
    """Drive T rounds, then fill the transcript and the accounting report.

    ``instance`` supplies spaces and the loss used for risk accounting;
    ``audit_instance`` (defaulting to it) is what the replay audit
    rebuilds the learner from (a structure/option pair for the
    information-set learner).  Deterministic given (learner seed,
    environment seed, config): repeated invocations produce identical
    transcripts byte for byte.
    """
    if T < 1:
        raise ConfigError("horizon must be at least 1")
    if audit_instance is None:
        audit_instance = instance
    env_records = []
    for _ in range(T):
        action = learner.next_action()
        if action["kind"] == "skip":
            env_records.append({"rows": None})
            continue
        obs, record = env.step(action)
        learner.observe(obs)
        env_records.append(record)
    p_hat = learner.finish()

    transcript = Transcript(
        algorithm=learner.cfg.algorithm,
        seed=learner.cfg.seed,
        config=learner.cfg.to_json(),
        rounds=learner.rounds,
        p_hat=np.asarray(p_hat, dtype=float),
        decision_labels=tuple(getattr(instance, "decisions").labels),
        env=env_records,
    )

    risk = float(np.dot(p_hat, _truth_loss_row(instance, env.truth_idx)))
    regret = _realized_regret(instance, learner.rounds, env_records)
    bound, cert = _bound_and_cert(learner, env_records)
    audit = privacy_audit(
        transcript,
        learner.cfg.alpha,
        audit_instance,
        solve_cache=getattr(learner, "_cache", None),
    )
    return RunReport(
        risk=risk,
        regret=regret,
        bound=bound,
        cert_value=cert,
        audit_pass=audit.passed,
        transcript=transcript,
        est_cumulative=_estimation_error(learner, env, instance),
        deviations=getattr(env, "deviations", 0),
    )


def _estimation_error(learner, env, instance) -> float:
    """Harness-side cumulative squared functional gap of the estimates.

    Only the harness knows the truth; sums E over the round's sampling
    distribution of (truth mean - estimate mean)^2 across rounds that
    recorded both a pair distribution and an estimate-mean matrix.
    """
    if not isinstance(instance, ModelClass):
        return math.nan
    truth_rows = getattr(env, "truth", None)
    if truth_rows is None:
        return math.nan
    fn_mat = np.stack([fn.values for fn in instance.dictionary.entries])
    truth_means = truth_rows.rows @ fn_mat.T
    total = 0.0
    seen = False
    for rnd in getattr(learner, "rounds", []):
        means = rnd.internals.get("mhat_means") if rnd.internals else None
        if means is None or rnd.q is None:
            continue
        if rnd.internals.get("phase") not in (None, "explore"):
            continue
        q = np.asarray(rnd.q)
        if q.shape != means.shape:
            continue
        seen = True
        total += float(np.sum(q * (truth_means - means) ** 2))
    return total if seen else math.nan


def _realized_regret(instance, rounds, env_records) -> float:
    """Hindsight regret of the played-decision distributions.

    Needs a reward-based loss and per-round effective model rows; rounds
    without a decision distribution (queries, skips) make it undefined.
    """
    if not isinstance(instance, ModelClass) or instance.loss_spec.kind != "reward":
        return math.nan
    reward = instance.loss_spec.reward
    total_by_pi = np.zeros(len(instance.decisions))
    played = 0.0
    for rnd, rec in zip(rounds, env_records):
        rows = rec.get("rows")
        if rows is None:
            return math.nan
        values = np.einsum("pz,zp->p", rows, reward.values)
        if rnd.q is not None:
            q = np.asarray(rnd.q, dtype=float)
            marginal = q if q.ndim == 1 else q.sum(axis=1)
        elif rnd.action.get("decision") is not None:
            marginal = np.zeros(len(instance.decisions))
            marginal[rnd.action["decision"]] = 1.0
        else:
            return math.nan
        total_by_pi += values
        played += float(np.dot(marginal, values))
    return float(total_by_pi.max() - played)


def _bound_and_cert(learner, env_records):
    from .learners import BruteForceDC, ExoPlus, LdpE2D, SqE2D

    if isinstance(learner, LdpE2D):
        cert = learner.cert_value if learner.cert_value is not None else math.nan
        return cert, cert
    if isinstance(learner, BruteForceDC):
        return learner.concentration_bound(), math.nan
    if isinstance(learner, ExoPlus):
        rows = [r["rows"] for r in env_records if r["rows"] is not None]
        slack = learner.cfg.slack
        if rows:
            log_inv_prior = learner.good_set_log_prior(rows, slack)
        else:
            log_inv_prior = math.inf
        bound = (
            learner.cfg.T * slack
            + learner.cert_sum
            + 2.0 * learner.cfg.gamma * (log_inv_prior + math.log(1.0 / learner.cfg.delta))
        )
        return bound, learner.cert_sum
    if isinstance(learner, SqE2D):
        cert = learner.cert_value if learner.cert_value is not None else math.nan
        return cert, cert
    return math.nan, math.nan


# ---------------------------------------------------------------------------
# Privacy audit
# ---------------------------------------------------------------------------


@dataclass
class AuditReport:
    passed: bool
    failures: list = field(default_factory=list)  # (round index, reason)

    def first_failure_round(self):
        return self.failures[0][0] if self.failures else None


def rebuild_learner(transcript: Transcript, instance, solve_cache: dict | None = None):
    """Reconstruct the learner object a transcript claims to have run."""
    cfg = LearnerConfig.from_json(transcript.config)
    algo = ALGORITHMS.get(transcript.algorithm)
    if algo is None:
        raise ConfigError(f"unknown algorithm {transcript.algorithm!r}")
    if transcript.algorithm == "exo_plus":
        info, option = instance
        return algo(info, cfg, option=option)
    if solve_cache is not None and transcript.algorithm in ("ldp_e2d", "sq_e2d"):
        return algo(instance, cfg, solve_cache=solve_cache)
    return algo(instance, cfg)


def privacy_audit(
    transcript: Transcript, alpha: float, instance, solve_cache: dict | None = None
) -> AuditReport:
    """Check recorded channels and replay determinism.

    Passes iff (a) every recorded channel is alpha-private within 1e-12
    and (b) replaying the learner from its seed over the recorded
    observation prefix reproduces every recorded action, i.e. action
    selection depended only on past observations.
    """
    failures = []
    obs_space = getattr(instance[0] if isinstance(instance, tuple) else instance,
                        "obs_space", None)
    level_cache: dict = {}
    for idx, rnd in enumerate(transcript.rounds):
        if rnd.action["kind"] == "channel":
            key = _action_key(rnd.action)
            level = level_cache.get(key)
            if level is None:
                if obs_space is not None and len(rnd.action["ell"]) == len(obs_space):
                    level = dp_level(_channel_from_action(rnd.action, obs_space))
                else:
                    level = math.inf
                level_cache[key] = level
            if level > alpha + _DP_SLACK:
                failures.append((idx, f"channel at privacy level {level:.6g} > {alpha}"))

    try:
        replayed = rebuild_learner(transcript, instance, solve_cache=solve_cache)
        for idx, rnd in enumerate(transcript.rounds):
            predicted = replayed.next_action()
            if not actions_equal(predicted, rnd.action):
                failures.append((idx, "replay diverged from the recorded action"))
                break
            if rnd.action["kind"] != "skip":
                replayed.observe(rnd.obs)
    except Exception as exc:  # replay must never crash the audit
        failures.append((len(failures), f"replay failed: {exc!r}"))

    return AuditReport(passed=not failures, failures=failures)
