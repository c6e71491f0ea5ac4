"""Experiment configs, seeded sweeps, and byte-reproducible result emission.

Configs are JSON documents validated against the schema shipped with the
package; unknown fields are rejected so sweep typos fail loudly.  Each
(T, seed-index) cell derives its own 64-bit seed from the master seed, so
results never depend on execution order; rows are sorted by run id before
emission and floats are written with repr, making the CSV byte-stable
across repeat invocations and worker counts (the PRIDEC_THREADS variable
caps the worker pool).
"""

from __future__ import annotations

import concurrent.futures
import importlib.resources
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NotFound
from .learners import ALGORITHMS, LearnerConfig, Transcript
from .models import (
    BUILDERS,
    LossSpec,
    Model,
    ModelClass,
    default_dictionary,
)
from .prob import FiniteSpace, LDictionary, ScalarFn
from .rng import derive_seed

CSV_HEADER = "run_id,seed,T,alpha,algorithm,risk,regret,bound,cert_value,audit_pass"


def load_schema() -> dict:
    text = importlib.resources.files("pridec").joinpath("config_schema.json").read_text()
    return json.loads(text)


def validate_config(config: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(config, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None


def _freeze(x):
    return tuple(_freeze(v) for v in x) if isinstance(x, list) else x


def instance_from_inline(payload: dict) -> ModelClass:
    decisions = FiniteSpace(tuple(_freeze(x) for x in payload["decisions"]))
    obs_space = FiniteSpace(tuple(_freeze(x) for x in payload["observations"]))
    models = [
        Model(decisions, obs_space, np.asarray(m["rows"], dtype=float))
        for m in payload["models"]
    ]
    loss_spec = payload["loss"]
    kind = loss_spec["kind"]
    if kind == "reward":
        from .models import RewardFn

        reward = RewardFn(obs_space, decisions, np.asarray(loss_spec["values"], float))
        loss = LossSpec.reward_based(reward)
    elif kind == "table":
        loss = LossSpec.from_table(np.asarray(loss_spec["table"], float))
        reward = None
    elif kind == "indicator":
        loss = LossSpec.indicator(loss_spec["blocks"], len(models))
        reward = None
    else:
        raise ConfigError(f"unknown loss kind {kind!r}")
    if "dictionary" in payload:
        dictionary = LDictionary(
            [ScalarFn(obs_space, v) for v in payload["dictionary"]]
        )
    else:
        dictionary = default_dictionary(
            obs_space, reward if kind == "reward" else None
        )
    return ModelClass(models, loss, dictionary)


def build_instance(spec: dict) -> ModelClass:
    if "inline" in spec:
        return instance_from_inline(spec["inline"])
    builder = spec.get("builder")
    if builder not in BUILDERS:
        raise NotFound(f"unknown instance builder {builder!r}")
    return BUILDERS[builder](**spec.get("params", {}))


def build_environment(spec: dict, cls: ModelClass, seed: int, run_index: int):
    from .environments import HuberEnv, StationaryEnv

    params = dict(spec.get("params", {}))
    truth = params.pop("truth", "cycle")
    truth_idx = run_index % len(cls) if truth == "cycle" else int(truth)
    kind = spec["kind"]
    if kind == "stationary":
        if params:
            raise ConfigError(f"unexpected environment params {sorted(params)}")
        return StationaryEnv(cls, truth_idx, seed)
    if kind == "huber":
        beta = float(params.pop("beta"))
        strategy = params.pop("strategy", "greedy")
        contamination = None
        if "contamination_rows" in params:
            contamination = Model(
                cls.decisions,
                cls.obs_space,
                np.asarray(params.pop("contamination_rows"), dtype=float),
            )
        if params:
            raise ConfigError(f"unexpected environment params {sorted(params)}")
        return HuberEnv(
            cls, truth_idx, beta, seed, strategy=strategy, contamination=contamination
        )
    raise ConfigError(f"unknown environment kind {kind!r}")


@dataclass(frozen=True)
class ResultRow:
    run_id: str
    seed: int
    T: int
    alpha: float
    algorithm: str
    risk: float
    regret: float
    bound: float
    cert_value: float
    audit_pass: bool

    def to_csv(self) -> str:
        cells = [
            self.run_id,
            repr(int(self.seed)),
            repr(int(self.T)),
            repr(float(self.alpha)),
            self.algorithm,
            repr(float(self.risk)),
            repr(float(self.regret)),
            repr(float(self.bound)),
            repr(float(self.cert_value)),
            "true" if self.audit_pass else "false",
        ]
        return ",".join(cells)


def _single_run(config: dict, T: int, index: int):
    from .environments import run as drive

    master = config["seeds"]["master"]
    run_seed = derive_seed(master, "run", T, index)
    learner_seed = derive_seed(run_seed, "learner")
    env_seed = derive_seed(run_seed, "env")

    cls = build_instance(config["instance"])
    learner_spec = config["learner"]
    params = dict(learner_spec.get("params", {}))
    cfg = LearnerConfig(
        algorithm=learner_spec["algorithm"], T=T, seed=learner_seed, **params
    )
    algo = ALGORITHMS.get(cfg.algorithm)
    if algo is None:
        raise ConfigError(f"unknown algorithm {cfg.algorithm!r}")
    learner = algo(cls, cfg)
    env = build_environment(config["environment"], cls, env_seed, index)
    report = drive(learner, env, cls, T)
    report.transcript.instance = config["instance"]
    return report


def execute(config: dict, T_values=None):
    """Run the full (T x seeds) grid; returns (rows, transcripts) sorted by run id."""
    validate_config(config)
    ts = list(T_values) if T_values is not None else list(config["T"])
    count = config["seeds"]["count"]
    master = config["seeds"]["master"]
    grid = [(T, i) for T in ts for i in range(count)]
    ids = {
        (T, i): f"r{k:06d}" for k, (T, i) in enumerate(grid)
    }

    threads = int(os.environ.get("PRIDEC_THREADS", "1") or "1")
    results = {}
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                pool.submit(_single_run, config, T, i): (T, i) for (T, i) in grid
            }
            for fut in concurrent.futures.as_completed(futures):
                results[futures[fut]] = fut.result()
    else:
        for T, i in grid:
            results[(T, i)] = _single_run(config, T, i)

    rows, transcripts = [], []
    for T, i in grid:
        report = results[(T, i)]
        run_seed = derive_seed(master, "run", T, i)
        rows.append(
            ResultRow(
                run_id=ids[(T, i)],
                seed=run_seed,
                T=T,
                alpha=report.transcript.config.get("alpha", math.nan),
                algorithm=report.transcript.algorithm,
                risk=report.risk,
                regret=report.regret,
                bound=report.bound,
                cert_value=report.cert_value,
                audit_pass=report.audit_pass,
            )
        )
        transcripts.append((ids[(T, i)], report.transcript))
    rows.sort(key=lambda r: r.run_id)
    return rows, transcripts


def write_csv(rows, path: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def write_transcripts(transcripts, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    for run_id, transcript in transcripts:
        path = os.path.join(directory, f"{run_id}.json")
        with open(path, "w", newline="\n") as fh:
            json.dump(transcript.to_json(), fh, sort_keys=True)


def audit_transcript_payload(payload: dict, alpha: float):
    """Rebuild the instance named inside a transcript and audit it."""
    from .environments import privacy_audit

    transcript = Transcript.from_json(payload)
    if transcript.instance is None:
        raise ConfigError("transcript carries no instance spec; cannot replay")
    cls = build_instance(transcript.instance)
    return privacy_audit(transcript, alpha, cls)
