"""Decision-estimation quantities on finite instances, with certificates.

Offset variants are exact linear programs.  Constrained variants run an
outer search over the information distribution (exhaustive grid on tiny
instances, Lagrangian warm starts plus projected subgradient otherwise)
around an exact inner game solve, so every returned value is a certified
upper bound: re-evaluating the defining objective at the certificate's
(p, q) reproduces the value to 1e-9.

Restricting the functional coordinate to a finite dictionary only shrinks
the optimizer's options, so ldp-flavored values reported here upper-bound
the corresponding unrestricted quantities; certificates record this
direction in their ``mode``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyClass, Infeasible, NotFound, RangeError, SpaceMismatch
from .lp import simplex_minimax
from .models import Model, ModelClass, QueryModelClass
from .prob import FiniteDist, FiniteSpace, LDictionary, ScalarFn, huber_hellinger
from .rng import stream

_REEVAL_TOL = 1e-9
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class SearchConfig:
    """Outer-search knobs for the constrained/quantile/query solvers."""

    restarts: int = 8
    steps: int = 500
    step_scale: float = 0.5
    grid_resolution: int = 40
    exact_enum_max_dim: int = 4
    p_grid_max_dim: int = 3
    p_candidates: int = 64
    gamma_grid: tuple = tuple(2.0**j for j in range(-6, 14))
    seed: int = 20240

    @property
    def grid_step(self) -> float:
        return 1.0 / self.grid_resolution


@dataclass(frozen=True)
class DecCertificate:
    """A (value, p, q, witness) tuple certifying an upper bound.

    ``mode`` records how the value was obtained: "exact_lp" (LP optimum),
    "exact_enum" (exhaustive grid outer search), or "heuristic_upper"
    (best value found; still a valid upper bound by construction since the
    inner solve is exact at the returned q).
    """

    kind: str
    value: float
    p: FiniteDist
    q: FiniteDist
    witness_model: int
    mode: str
    params: dict = field(default_factory=dict)

    def q_matrix(self, n_pi: int, n_l: int) -> np.ndarray:
        return self.q.mass.reshape(n_pi, n_l)


def _pair_space(decisions: FiniteSpace, dictionary: LDictionary) -> FiniteSpace:
    labels = tuple(
        (d, i) for d in decisions.labels for i in range(len(dictionary))
    )
    return FiniteSpace(labels)


def _as_model(cls: ModelClass, ref) -> Model:
    if isinstance(ref, Model):
        return ref
    if isinstance(ref, (list, tuple, np.ndarray)):
        return cls.mixture(ref)
    raise RangeError("reference must be a Model or mixture weights")


# ---------------------------------------------------------------------------
# Offset DECs (exact LPs)
# ---------------------------------------------------------------------------


def offset_pac_dec_ldp(cls: ModelClass, ref, gamma: float) -> DecCertificate:
    """Offset value with functional divergences: exact LP.

    min over p in simplex(decisions), q in simplex(decisions x dictionary)
    of max over models of E_p[loss] - gamma * E_q[squared functional gap].
    """
    if gamma < 0:
        raise RangeError("offset weight must be non-negative")
    ref_model = _as_model(cls, ref)
    n_m, n_pi, n_l = len(cls), len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref_model).reshape(n_m, n_pi * n_l)
    rows = np.hstack([cls.loss_table, -gamma * div])
    sol = simplex_minimax(rows, [n_pi, n_pi * n_l])
    p, q = sol.blocks
    achieved = cls.loss_table @ p - gamma * (div @ q)
    witness = int(np.argmax(achieved))
    return DecCertificate(
        kind="offset-pac-ldp",
        value=float(achieved.max()),
        p=FiniteDist(cls.decisions, p),
        q=FiniteDist(_pair_space(cls.decisions, cls.dictionary), q),
        witness_model=witness,
        mode="exact_lp",
        params={"gamma": gamma},
    )


def offset_regret_dec_ldp(cls: ModelClass, ref, gamma: float) -> DecCertificate:
    """Regret-flavored offset value: one coupled distribution over pairs."""
    if gamma < 0:
        raise RangeError("offset weight must be non-negative")
    ref_model = _as_model(cls, ref)
    n_m, n_pi, n_l = len(cls), len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref_model).reshape(n_m, n_pi * n_l)
    loss_on_pairs = np.repeat(cls.loss_table, n_l, axis=1)
    rows = loss_on_pairs - gamma * div
    sol = simplex_minimax(rows, [n_pi * n_l])
    q = sol.blocks[0]
    achieved = rows @ q
    pair_space = _pair_space(cls.decisions, cls.dictionary)
    p_marginal = q.reshape(n_pi, n_l).sum(axis=1)
    return DecCertificate(
        kind="offset-reg-ldp",
        value=float(achieved.max()),
        p=FiniteDist(cls.decisions, p_marginal),
        q=FiniteDist(pair_space, q),
        witness_model=int(np.argmax(achieved)),
        mode="exact_lp",
        params={"gamma": gamma},
    )


def _offset_hellinger_matrix(cls: ModelClass, ref_model: Model, beta: float | None):
    if beta is None:
        return cls.hellinger_matrix(ref_model)
    div = np.empty((len(cls), len(cls.decisions)))
    for i, m in enumerate(cls.models):
        for j in range(len(cls.decisions)):
            div[i, j] = huber_hellinger(m.dist_at(j), ref_model.dist_at(j), beta)
    return div


def offset_dec_hellinger(
    cls: ModelClass, ref, gamma: float, objective: str = "pac", beta: float | None = None
) -> DecCertificate:
    """Offset value with (optionally beta-perturbed) Hellinger divergence.

    objective "pac" optimizes separate p and q over decisions; "reg" uses
    one distribution for both roles.  ``beta`` switches the divergence
    column to the beta-perturbed variant used for contaminated
    environments; beta=0 coincides with the plain Hellinger value.
    """
    if gamma < 0:
        raise RangeError("offset weight must be non-negative")
    if objective not in ("pac", "reg"):
        raise RangeError(f"unknown objective {objective!r}")
    if beta is not None and not 0.0 <= beta <= 1.0:
        raise RangeError("perturbation level must lie in [0,1]")
    ref_model = _as_model(cls, ref)
    div = _offset_hellinger_matrix(cls, ref_model, beta)
    n_pi = len(cls.decisions)
    kind = ("robust-offset" if beta is not None else "offset-hellinger") + "-" + objective
    if objective == "pac":
        rows = np.hstack([cls.loss_table, -gamma * div])
        sol = simplex_minimax(rows, [n_pi, n_pi])
        p, q = sol.blocks
        achieved = cls.loss_table @ p - gamma * (div @ q)
    else:
        rows = cls.loss_table - gamma * div
        sol = simplex_minimax(rows, [n_pi])
        p = q = sol.blocks[0]
        achieved = rows @ q
    params = {"gamma": gamma, "objective": objective}
    if beta is not None:
        params["beta"] = beta
    return DecCertificate(
        kind=kind,
        value=float(achieved.max()),
        p=FiniteDist(cls.decisions, p),
        q=FiniteDist(cls.decisions, q),
        witness_model=int(np.argmax(achieved)),
        mode="exact_lp",
        params=params,
    )


def robust_offset_dec(
    cls: ModelClass, ref, gamma: float, beta: float, objective: str = "pac"
) -> DecCertificate:
    """Offset value against beta-contaminated observations."""
    return offset_dec_hellinger(cls, ref, gamma, objective=objective, beta=beta)


def reevaluate_offset(cert: DecCertificate, cls: ModelClass, ref) -> float:
    """Recompute an offset certificate's objective at its (p, q)."""
    ref_model = _as_model(cls, ref)
    gamma = cert.params["gamma"]
    if cert.kind == "offset-pac-ldp" or cert.kind == "offset-reg-ldp":
        n_pi, n_l = len(cls.decisions), len(cls.dictionary)
        div = cls.divergence_cube(ref_model).reshape(len(cls), n_pi * n_l)
        if cert.kind == "offset-pac-ldp":
            achieved = cls.loss_table @ cert.p.mass - gamma * (div @ cert.q.mass)
        else:
            pairs = cert.q.mass
            loss_on_pairs = np.repeat(cls.loss_table, n_l, axis=1)
            achieved = (loss_on_pairs - gamma * div) @ pairs
        return float(achieved.max())
    beta = cert.params.get("beta")
    div = _offset_hellinger_matrix(cls, ref_model, beta)
    achieved = cls.loss_table @ cert.p.mass - gamma * (div @ cert.q.mass)
    return float(achieved.max())


# ---------------------------------------------------------------------------
# Simplex utilities
# ---------------------------------------------------------------------------


def simplex_grid(dim: int, resolution: int) -> np.ndarray:
    """All probability vectors with entries being multiples of 1/resolution."""
    points = []
    for comp in itertools.combinations(range(resolution + dim - 1), dim - 1):
        prev, vec = -1, []
        for c in comp:
            vec.append(c - prev - 1)
            prev = c
        vec.append(resolution + dim - 2 - prev)
        points.append(vec)
    return np.asarray(points, dtype=float) / resolution


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(v) + 1)
    cond = u + (1.0 - css) / idx > 0
    rho = idx[cond][-1]
    lam = (1.0 - css[rho - 1]) / rho
    return np.maximum(v + lam, 0.0)


# ---------------------------------------------------------------------------
# Constrained searches (grid / warm starts / subgradient around an exact inner)
# ---------------------------------------------------------------------------


def _inner_game(loss_table: np.ndarray, feasible: np.ndarray):
    """Exact inner solve: min_p max over feasible models of E_p loss.

    An empty feasible set means no model can satisfy the information
    constraint at this q; the value is 0 with a point-mass p (losses are
    non-negative, so 0 is the floor).
    """
    idx = np.flatnonzero(feasible)
    n_pi = loss_table.shape[1]
    if idx.size == 0:
        p = np.zeros(n_pi)
        p[0] = 1.0
        return 0.0, p, -1
    sol = simplex_minimax(loss_table[idx], [n_pi])
    p = sol.blocks[0]
    achieved = loss_table[idx] @ p
    return float(achieved.max()), p, int(idx[np.argmax(achieved)])


class _InnerCache:
    """Caches inner game solves keyed by the feasible-set bitmask."""

    def __init__(self, loss_table: np.ndarray):
        self.loss_table = loss_table
        self._store: dict[bytes, tuple] = {}

    def solve(self, feasible: np.ndarray):
        key = np.packbits(feasible).tobytes()
        hit = self._store.get(key)
        if hit is None:
            hit = _inner_game(self.loss_table, feasible)
            self._store[key] = hit
        return hit


def _constrained_search(
    loss_table: np.ndarray,
    div_rows: np.ndarray,
    eps_sq: float,
    search: SearchConfig,
    warm_q: Sequence[np.ndarray] = (),
    inner: Callable | None = None,
):
    """Outer search over q with an exact inner solve at every candidate.

    Returns (value, p, q, witness, mode).  ``inner`` may override the
    default linear inner game (used by the quantile variant); it must map
    a feasibility mask to (value, p, witness).
    """
    n_m, n_q = div_rows.shape
    cache = _InnerCache(loss_table)
    solve = cache.solve if inner is None else inner

    def feasible_mask(q: np.ndarray) -> np.ndarray:
        return div_rows @ q <= eps_sq + _FEAS_TOL

    best = None

    def consider(q: np.ndarray):
        nonlocal best
        value, p, witness = solve(feasible_mask(q))
        if best is None or value < best[0] - 1e-15:
            best = (value, p, q.copy(), witness)
        return value

    exact = n_q <= search.exact_enum_max_dim
    if exact:
        grid = simplex_grid(n_q, search.grid_resolution)
        masks = div_rows @ grid.T <= eps_sq + _FEAS_TOL  # (n_m, n_grid)
        seen: dict[bytes, int] = {}
        for g in range(grid.shape[0]):
            key = np.packbits(masks[:, g]).tobytes()
            if key not in seen:
                seen[key] = g
        for g in seen.values():
            consider(grid[g])
    for q in warm_q:
        consider(np.asarray(q, dtype=float))
    for v in np.eye(n_q):
        consider(v)
    consider(np.full(n_q, 1.0 / n_q))

    if not exact:
        rng = stream(search.seed, "constrained-search")
        for restart in range(search.restarts):
            q = rng.dirichlet(np.ones(n_q))
            for it in range(1, search.steps + 1):
                mask = feasible_mask(q)
                value, p, witness = solve(mask)
                if best is None or value < best[0] - 1e-15:
                    best = (value, p, q.copy(), witness)
                idx = np.flatnonzero(mask)
                if idx.size == 0:
                    break
                achieved = loss_table[idx] @ p
                active = idx[achieved >= achieved.max() - 1e-9]
                direction = div_rows[active].mean(axis=0)
                q = project_simplex(q + search.step_scale / math.sqrt(it) * direction)

    value, p, q, witness = best
    mode = "exact_enum" if exact else "heuristic_upper"
    return value, p, q, witness, mode


def constrained_pac_dec_ldp(
    cls: ModelClass, ref, eps: float, search: SearchConfig | None = None
) -> DecCertificate:
    """Constrained value with functional divergences: certified upper bound.

    For a fixed information distribution q the feasible set {M : E_q of
    squared functional gap <= eps^2} is explicit and the inner problem is
    an exact matrix game; the outer search over q uses an exhaustive grid
    when the pair space has at most ``exact_enum_max_dim`` coordinates,
    and Lagrangian warm starts plus multi-start projected subgradient
    otherwise.
    """
    if eps < 0:
        raise RangeError("information radius must be non-negative")
    search = search or SearchConfig()
    ref_model = _as_model(cls, ref)
    n_pi, n_l = len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref_model).reshape(len(cls), n_pi * n_l)
    warm = []
    for gamma in search.gamma_grid:
        warm.append(offset_pac_dec_ldp(cls, ref_model, gamma).q.mass)
    if eps > 0:
        warm.append(offset_pac_dec_ldp(cls, ref_model, eps**-2).q.mass)
    value, p, q, witness, mode = _constrained_search(
        cls.loss_table, div, eps * eps, search, warm_q=warm
    )
    return DecCertificate(
        kind="constrained-pac-ldp",
        value=value,
        p=FiniteDist(cls.decisions, p),
        q=FiniteDist(_pair_space(cls.decisions, cls.dictionary), q),
        witness_model=witness,
        mode=mode,
        params={"eps": eps},
    )


def constrained_value_at(
    cls: ModelClass, ref, eps: float, q_mass: np.ndarray
) -> tuple[float, np.ndarray]:
    """Exact inner value at a fixed q: used to re-verify certificates."""
    ref_model = _as_model(cls, ref)
    n_pi, n_l = len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref_model).reshape(len(cls), n_pi * n_l)
    feasible = div @ q_mass <= eps * eps + _FEAS_TOL
    value, p, _ = _inner_game(cls.loss_table, feasible)
    return value, p


# ---------------------------------------------------------------------------
# Quantile variant
# ---------------------------------------------------------------------------


def quantile_loss(p: FiniteDist, losses: Sequence[float], delta: float) -> float:
    """Largest level whose loss tail under p has probability at least delta.

    sup{ L : P_{pi ~ p}(loss(pi) >= L) >= delta }, computed by scanning the
    support losses in decreasing order.
    """
    if not 0.0 < delta <= 1.0:
        raise RangeError("quantile level must lie in (0, 1]")
    vals = np.asarray(losses, dtype=float)
    order = np.argsort(-vals)
    tail = 0.0
    for idx in order:
        tail += float(p.mass[idx])
        if tail >= delta - 1e-12:
            return float(vals[idx])
    return 0.0


def _quantile_value(p: np.ndarray, loss_row: np.ndarray, delta: float) -> float:
    order = np.argsort(-loss_row)
    tail = np.cumsum(p[order])
    hit = np.flatnonzero(tail >= delta - 1e-12)
    return float(loss_row[order[hit[0]]]) if hit.size else 0.0


def quantile_pac_dec(
    cls: ModelClass,
    ref,
    eps: float,
    delta: float,
    search: SearchConfig | None = None,
) -> DecCertificate:
    """Quantile-loss variant of the constrained value.

    The inner objective (worst feasible model's delta-quantile loss of p)
    is not linear in p, so the inner optimum over p is found by grid when
    the decision space is small and by a seeded candidate sweep otherwise;
    the result is a certified upper bound either way.
    """
    if not 0.0 < delta <= 1.0:
        raise RangeError("quantile level must lie in (0, 1]")
    if eps < 0:
        raise RangeError("information radius must be non-negative")
    search = search or SearchConfig()
    ref_model = _as_model(cls, ref)
    n_pi, n_l = len(cls.decisions), len(cls.dictionary)
    div = cls.divergence_cube(ref_model).reshape(len(cls), n_pi * n_l)

    if n_pi <= search.p_grid_max_dim:
        p_candidates = simplex_grid(n_pi, search.grid_resolution)
        p_exact = True
    else:
        rng = stream(search.seed, "quantile-p")
        p_candidates = np.vstack(
            [np.eye(n_pi), np.full((1, n_pi), 1.0 / n_pi)]
            + [rng.dirichlet(np.ones(n_pi)) for _ in range(search.p_candidates)]
        )
        p_exact = False

    inner_cache: dict[bytes, tuple] = {}

    def inner(feasible: np.ndarray):
        key = np.packbits(feasible).tobytes()
        hit = inner_cache.get(key)
        if hit is not None:
            return hit
        idx = np.flatnonzero(feasible)
        if idx.size == 0:
            p = np.zeros(n_pi)
            p[0] = 1.0
            hit = (0.0, p, -1)
        else:
            best_val, best_p, best_w = math.inf, None, -1
            for p in p_candidates:
                worst, w_idx = -math.inf, -1
                for m in idx:
                    v = _quantile_value(p, cls.loss_table[m], delta)
                    if v > worst:
                        worst, w_idx = v, int(m)
                if worst < best_val:
                    best_val, best_p, best_w = worst, p, w_idx
            hit = (best_val, best_p, best_w)
        inner_cache[key] = hit
        return hit

    warm = [offset_pac_dec_ldp(cls, ref_model, g).q.mass for g in search.gamma_grid]
    value, p, q, witness, mode = _constrained_search(
        cls.loss_table, div, eps * eps, search, warm_q=warm, inner=inner
    )
    if not p_exact and mode == "exact_enum":
        mode = "heuristic_upper"
    return DecCertificate(
        kind="quantile-pac-ldp",
        value=value,
        p=FiniteDist(cls.decisions, p),
        q=FiniteDist(_pair_space(cls.decisions, cls.dictionary), q),
        witness_model=witness,
        mode=mode,
        params={"eps": eps, "delta": delta},
    )


# ---------------------------------------------------------------------------
# Local value and modulus of continuity
# ---------------------------------------------------------------------------


def _tv_radius(cls: ModelClass, i: int, j: int) -> float:
    a, b = cls.models[i].rows, cls.models[j].rows
    return float(0.5 * np.abs(a - b).sum(axis=1).max())


def local_dec(cls: ModelClass, m0_idx: int, eps: float) -> float:
    """Two-point value around a pinned model: exact enumeration.

    max over class members within sup-decision TV radius eps of m0 of
    min over decisions of the sum of both models' losses.
    """
    if not 0 <= m0_idx < len(cls):
        raise NotFound("pinned model index out of range")
    best = 0.0
    for i in range(len(cls)):
        if _tv_radius(cls, i, m0_idx) <= eps + _FEAS_TOL:
            cand = float((cls.loss_table[i] + cls.loss_table[m0_idx]).min())
            best = max(best, cand)
    return best


def tv_modulus(cls: ModelClass, m0_idx: int, eps: float) -> float:
    """Modulus of continuity: largest optimal-decision gap within TV radius eps.

    Decision labels must be numeric; the gap is the absolute difference of
    the two models' optimal decisions.
    """
    if not 0 <= m0_idx < len(cls):
        raise NotFound("pinned model index out of range")
    labels = [
        l[0] if isinstance(l, tuple) and len(l) == 1 else l
        for l in cls.decisions.labels
    ]
    try:
        numeric = [float(l) for l in labels]
    except (TypeError, ValueError):
        raise RangeError("modulus of continuity needs numeric decision labels")
    pi0 = numeric[cls.optimal_decision(m0_idx)]
    best = 0.0
    for i in range(len(cls)):
        if _tv_radius(cls, i, m0_idx) <= eps + _FEAS_TOL:
            best = max(best, abs(numeric[cls.optimal_decision(i)] - pi0))
    return best


# ---------------------------------------------------------------------------
# Fractional covering
# ---------------------------------------------------------------------------


def fractional_covering(cls: ModelClass, delta: float):
    """Best worst-case mass a single decision distribution puts on good sets.

    Maximizes t subject to p(decisions with loss <= delta) >= t for every
    model.  Returns (1/t*, p*); (+inf, None) when some model has no
    delta-good decision at all.
    """
    if delta < 0:
        raise RangeError("risk level must be non-negative")
    good = (cls.loss_table <= delta + _FEAS_TOL).astype(float)
    if np.any(good.sum(axis=1) == 0):
        return math.inf, None
    sol = simplex_minimax(-good, [len(cls.decisions)])
    t_star = -sol.value
    p_star = FiniteDist(cls.decisions, sol.blocks[0])
    if t_star <= 0:  # pragma: no cover - excluded by the emptiness check
        return math.inf, None
    return float(1.0 / t_star), p_star


# ---------------------------------------------------------------------------
# Query-based value
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RandomizedQueryModel:
    """A distribution over response tables, used as a query reference."""

    weights: np.ndarray
    tables: np.ndarray  # (k, |queries|, dim)

    def __init__(self, weights, tables):
        w = np.asarray(weights, dtype=float)
        t = np.asarray(tables, dtype=float)
        if t.ndim == 2:
            t = t[:, :, None]
        if w.shape[0] != t.shape[0]:
            raise RangeError("one weight per response table")
        if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
            raise RangeError("weights must form a probability vector")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tables", t)

    @staticmethod
    def from_class(qc: QueryModelClass, member_indices: Sequence[int]):
        idx = list(member_indices)
        if not idx:
            raise EmptyClass("randomized query model needs at least one member")
        w = np.full(len(idx), 1.0 / len(idx))
        return RandomizedQueryModel(w, qc.responses[idx])


def query_error_matrix(
    qc: QueryModelClass, ref: RandomizedQueryModel, tau: float
) -> np.ndarray:
    """err[m, query] = probability that a reference draw is > tau from model m."""
    if ref.tables.shape[1] != len(qc.queries):
        raise SpaceMismatch("reference tables do not match the query space")
    diff = qc.responses[:, None, :, :] - ref.tables[None, :, :, :]
    if qc.norm == "linf":
        dist = np.abs(diff).max(axis=3)
    else:
        dist = np.linalg.norm(diff, axis=3)
    far = (dist > tau + _FEAS_TOL).astype(float)  # (models, refs, queries)
    return np.einsum("mkq,k->mq", far, ref.weights)


def sq_dec(
    qc: QueryModelClass,
    ref: RandomizedQueryModel,
    eps: float,
    tau: float,
    search: SearchConfig | None = None,
) -> DecCertificate:
    """Query-based constrained value with an indicator divergence.

    The information constraint bounds, under the query distribution q and
    a reference draw, the probability that a model's response is more
    than tau from the draw.
    """
    if tau < 0 or eps < 0:
        raise RangeError("tolerance and radius must be non-negative")
    search = search or SearchConfig()
    err = query_error_matrix(qc, ref, tau)
    value, p, q, witness, mode = _constrained_search(
        qc.loss_table, err, eps * eps, search
    )
    return DecCertificate(
        kind="sq-dec",
        value=value,
        p=FiniteDist(qc.decisions, p),
        q=FiniteDist(qc.queries, q),
        witness_model=witness,
        mode=mode,
        params={"eps": eps, "tau": tau},
    )


# ---------------------------------------------------------------------------
# Minimum correlation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationReport:
    """Pairwise correlations and the smallest certified correlation level."""

    reference: FiniteDist
    pairwise: np.ndarray
    eps_correlated_at: float
    decision_coverage_ok: bool
    family: tuple


def pairwise_correlation(
    dists: Sequence[FiniteDist], reference: FiniteDist
) -> np.ndarray:
    """rho[i, j] = E_ref (dDi/dRef - 1)(dDj/dRef - 1), over ref's support."""
    from .errors import AbsoluteContinuityError

    support = reference.mass > 0
    ratios = []
    for d in dists:
        if d.space != reference.space:
            raise SpaceMismatch("distributions and reference on different spaces")
        if np.any(d.mass[~support] > 0):
            raise AbsoluteContinuityError(
                "class member is not absolutely continuous w.r.t. the reference"
            )
        ratios.append(d.mass[support] / reference.mass[support] - 1.0)
    R = np.stack(ratios)
    return (R * reference.mass[support]) @ R.T


def min_correlation(
    cls: ModelClass,
    delta: float,
    ref_candidates: Sequence[FiniteDist],
    subset_cap: int = 4096,
) -> CorrelationReport:
    """Smallest certified correlation level over sub-families and references.

    A family of m members is certified at level eps when every pairwise
    correlation magnitude is at most eps^2 off the diagonal and m*eps^2 on
    it, and no decision is delta-good for more than m/2 of its members.
    Families are enumerated largest-first up to ``subset_cap`` subsets.
    Requires a statistical class (decision-independent observation laws).
    """
    for m in cls.models:
        if not m.is_statistical:
            raise RangeError("minimum correlation requires a statistical class")
    dists = [m.dist_at(0) for m in cls.models]
    n = len(dists)
    best_eps, best = math.inf, None
    first_pairwise = None
    examined = 0
    for ref in ref_candidates:
        rho = pairwise_correlation(dists, ref)
        if first_pairwise is None:
            first_pairwise = (ref, rho)
        indices = list(range(n))
        for size in range(n, 1, -1):
            for family in itertools.combinations(indices, size):
                examined += 1
                if examined > subset_cap:
                    break
                good_counts = (
                    cls.loss_table[list(family)] <= delta + _FEAS_TOL
                ).sum(axis=0)
                coverage_ok = bool(np.all(good_counts <= size / 2))
                if not coverage_ok:
                    continue
                sub = rho[np.ix_(family, family)]
                off = np.abs(sub[~np.eye(size, dtype=bool)])
                diag = np.abs(np.diag(sub))
                eps = max(
                    math.sqrt(off.max()) if off.size else 0.0,
                    math.sqrt(diag.max() / size),
                )
                if eps < best_eps:
                    best_eps, best = eps, (ref, rho, family)
            if examined > subset_cap:
                break
        if examined > subset_cap:
            break
    if best is None:
        ref, rho = first_pairwise
        return CorrelationReport(
            reference=ref,
            pairwise=rho,
            eps_correlated_at=math.inf,
            decision_coverage_ok=False,
            family=(),
        )
    ref, rho, family = best
    return CorrelationReport(
        reference=ref,
        pairwise=rho,
        eps_correlated_at=float(best_eps),
        decision_coverage_ok=True,
        family=family,
    )


# ---------------------------------------------------------------------------
# Fixed point for linear instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FixedPointResult:
    U: np.ndarray
    lambda0: float
    residual: float
    trace_expect: float
    converged: bool
    iterations: int


def solve_fixed_point_U(
    points: Sequence[Sequence[float]],
    weights: Sequence[float],
    lambda0: float,
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> FixedPointResult:
    """Damped fixed-point iteration for the normalization matrix.

    Finds a PSD matrix U with  E_x [U x x^T U / |U x|] + lambda0 * U = I,
    iterating the inverse map with damping 0.5 (the undamped iteration
    oscillates for skewed weight distributions).  Reports E_x |U x|,
    which never exceeds the dimension.
    """
    X = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if X.ndim != 2 or X.shape[0] != w.shape[0]:
        raise RangeError("one weight per point required")
    if np.any(np.linalg.norm(X, axis=1) == 0):
        raise RangeError("all points must be nonzero")
    if lambda0 <= 0:
        raise RangeError("regularization must be positive")
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise RangeError("weights must form a probability vector")
    d = X.shape[1]

    def residual_of(U: np.ndarray) -> float:
        UX = X @ U
        norms = np.linalg.norm(UX, axis=1)
        G = (UX * (w / norms)[:, None]).T @ UX
        return float(np.linalg.norm(G + lambda0 * U - np.eye(d)))

    U = np.eye(d) / math.sqrt(1.0 + lambda0)
    best_U, best_res = U, residual_of(U)
    it = 0
    for it in range(1, max_iter + 1):
        vals, vecs = np.linalg.eigh(U)
        vals = np.clip(vals, 1e-15, None)
        sqrtU = (vecs * np.sqrt(vals)) @ vecs.T
        UX = X @ U
        norms = np.linalg.norm(UX, axis=1)
        SX = X @ sqrtU
        middle = (SX * (w / norms)[:, None]).T @ SX
        target = np.linalg.inv(middle + lambda0 * np.eye(d))
        U_next = 0.5 * U + 0.5 * target
        U_next = 0.5 * (U_next + U_next.T)
        res = residual_of(U_next)
        U = U_next
        if res < best_res:
            best_U, best_res = U, res
        if res <= tol:
            break
    UX = X @ best_U
    trace_expect = float(np.dot(w, np.linalg.norm(UX, axis=1)))
    return FixedPointResult(
        U=best_U,
        lambda0=lambda0,
        residual=best_res,
        trace_expect=trace_expect,
        converged=best_res <= tol,
        iterations=it,
    )


# ---------------------------------------------------------------------------
# Gaussian half-space dictionary
# ---------------------------------------------------------------------------


def gaussian_halfspace_dictionary(
    obs_space: FiniteSpace,
    embedding: Sequence[Sequence[float]],
    n: int,
    seed: int,
) -> LDictionary:
    """Seeded half-space functionals for a unit-ball embedding of Z.

    Each entry is z -> |f(z)| * 1{<f(z), w> >= 0} for an independent
    standard Gaussian direction w.
    """
    F = np.asarray(embedding, dtype=float)
    if F.shape[0] != len(obs_space):
        raise SpaceMismatch("embedding must assign a vector to every label")
    norms = np.linalg.norm(F, axis=1)
    if np.any(norms > 1 + 1e-9):
        raise RangeError("embedding must map into the unit ball")
    if n < 1:
        raise RangeError("need at least one sampled direction")
    rng = stream(seed, "halfspace-dictionary")
    W = rng.normal(size=(n, F.shape[1]))
    indicators = (F @ W.T >= 0).astype(float)  # (|Z|, n)
    entries = [
        ScalarFn(obs_space, norms * indicators[:, i], name=f"halfspace[{i}]")
        for i in range(n)
    ]
    return LDictionary(entries)
