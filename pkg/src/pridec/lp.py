"""Self-contained dense LP solver for tiny minimax games.

Every optimization in this package reduces to

    min over x in a product of probability simplices of
    max over finitely many rows j of  rows[j] . x + offset[j],

a linear program with at most a few dozen variables.  A hand-rolled
two-phase primal simplex with Bland's anti-cycling rule is used instead of
an external solver: the instances are tiny and bitwise-deterministic
behavior matters more than speed.  Feasibility and optimality tolerances
are both 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import Infeasible

_TOL = 1e-9


class _Unbounded(Exception):
    pass


def _bland_phase(T: np.ndarray, basis: list[int], cost_row: np.ndarray, ncols: int):
    """Run primal simplex with Bland's rule on tableau T in place.

    T has shape (m, ncols+1); the last column is the rhs.  cost_row is the
    current reduced-cost row (length ncols+1, last entry = -objective).
    """
    m = T.shape[0]
    while True:
        enter = -1
        for j in range(ncols):
            if cost_row[j] < -_TOL:
                enter = j
                break
        if enter < 0:
            return
        leave, best_ratio = -1, np.inf
        for i in range(m):
            if T[i, enter] > _TOL:
                ratio = T[i, -1] / T[i, enter]
                if ratio < best_ratio - _TOL or (
                    abs(ratio - best_ratio) <= _TOL
                    and (leave < 0 or basis[i] < basis[leave])
                ):
                    best_ratio, leave = ratio, i
        if leave < 0:
            # fall back to the largest positive pivot before declaring the
            # column unbounded; guards against near-zero pivot thresholds
            col = T[:, enter]
            cand = int(np.argmax(col))
            if col[cand] <= 0:
                raise _Unbounded
            leave = cand
        piv = T[leave, enter]
        T[leave] /= piv
        for i in range(m):
            if i != leave and T[i, enter] != 0.0:
                T[i] -= T[i, enter] * T[leave]
        cost_row -= cost_row[enter] * T[leave]
        basis[leave] = enter


def solve_standard_lp(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """min c.x subject to A x = b, x >= 0.

    Returns (x, value, dual) where dual solves B^T y = c_B for the final
    basis B.  Raises Infeasible/_Unbounded-as-Infeasible when the program
    has no finite optimum.
    """
    A = np.asarray(A, dtype=float).copy()
    b = np.asarray(b, dtype=float).copy()
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0

    # Phase 1: artificial basis.
    T = np.hstack([A, np.eye(m), b[:, None]])
    basis = list(range(n, n + m))
    cost = np.zeros(n + m + 1)
    cost[n : n + m] = 1.0
    for i in range(m):
        cost -= T[i]  # make reduced costs of the artificial basis zero
    try:
        _bland_phase(T, basis, cost, n + m)
    except _Unbounded:
        # the phase-1 objective is bounded below by 0, so this is numerical
        # noise; accept the iterate if it is already feasible
        if -cost[-1] > 1e-7:
            raise Infeasible("linear program infeasible")
    if -cost[-1] > 1e-7:
        raise Infeasible("linear program infeasible")

    # Drive leftover artificials out of the basis where possible.
    for i in range(m):
        if basis[i] >= n:
            for j in range(n):
                if abs(T[i, j]) > _TOL:
                    piv = T[i, j]
                    T[i] /= piv
                    for k in range(m):
                        if k != i and T[k, j] != 0.0:
                            T[k] -= T[k, j] * T[i]
                    basis[i] = j
                    break

    keep = [i for i in range(m) if basis[i] < n or T[i, -1] > _TOL]
    if any(basis[i] >= n for i in keep):  # pragma: no cover - defensive
        raise Infeasible("degenerate artificial with positive value")
    T = T[keep][:, list(range(n)) + [n + m]]
    basis = [basis[i] for i in keep]

    # Phase 2.  A spurious "unbounded" verdict can only arise from tableau
    # round-off on bounded programs (all callers' programs are bounded);
    # the current basic solution is then returned as is, which callers
    # tolerate because they re-evaluate objectives from the strategies.
    cost = np.concatenate([c, [0.0]]).astype(float)
    for i, bi in enumerate(basis):
        if cost[bi] != 0.0:
            cost -= cost[bi] * T[i]
    try:
        _bland_phase(T, basis, cost, n)
    except _Unbounded:
        pass

    x = np.zeros(n)
    for i, bi in enumerate(basis):
        x[bi] = T[i, -1]
    value = float(np.dot(c[:n], x))

    dual = np.zeros(len(keep))
    B = A[keep][:, basis]
    try:
        dual = np.linalg.solve(B.T, c[basis])
    except np.linalg.LinAlgError:  # pragma: no cover - basis is invertible
        pass
    full_dual = np.zeros(m)
    for pos, row in enumerate(keep):
        full_dual[row] = dual[pos]
    return x, value, full_dual


@dataclass(frozen=True)
class MinimaxSolution:
    """Optimal mixed strategies for min-over-simplices / max-over-rows."""

    value: float
    blocks: tuple
    adversary: np.ndarray  # weights over the rows, summing to 1

    def block(self, i: int) -> np.ndarray:
        return self.blocks[i]


def simplex_minimax(
    rows: np.ndarray,
    block_sizes: Sequence[int],
    offsets: Sequence[float] | None = None,
) -> MinimaxSolution:
    """Solve min_{x in product of simplices} max_j rows[j].x + offsets[j].

    ``rows`` has one row per adversary option; its columns are grouped into
    consecutive simplex blocks of the given sizes.  Returns the value, the
    per-block optimal distributions, and the adversary's dual mixture over
    rows (clipped and renormalized; used only as a heuristic direction,
    never for certificates).
    """
    rows = np.asarray(rows, dtype=float)
    J, n = rows.shape
    if J == 0:
        raise Infeasible("minimax needs at least one adversary row")
    if sum(block_sizes) != n:
        raise ValueError("block sizes do not cover the columns")
    off = np.zeros(J) if offsets is None else np.asarray(offsets, dtype=float)

    # Normalize the payoff scale: keeps the tableau well conditioned when
    # callers mix O(1) losses with large penalty terms.  The value scales
    # linearly and the strategies/duals are scale invariant.
    scale = max(1.0, float(np.abs(rows).max(initial=0.0)), float(np.abs(off).max(initial=0.0)))
    rows = rows / scale
    off = off / scale

    k = len(block_sizes)
    # Variables: x (n), t+ , t-, slacks s (J).
    nv = n + 2 + J
    A = np.zeros((k + J, nv))
    b = np.zeros(k + J)
    col = 0
    for i, size in enumerate(block_sizes):
        A[i, col : col + size] = 1.0
        b[i] = 1.0
        col += size
    for j in range(J):
        A[k + j, :n] = rows[j]
        A[k + j, n] = -1.0
        A[k + j, n + 1] = 1.0
        A[k + j, n + 2 + j] = 1.0
        b[k + j] = -off[j]
    c = np.zeros(nv)
    c[n] = 1.0
    c[n + 1] = -1.0

    x, value, dual = solve_standard_lp(A, b, c)

    blocks = []
    col = 0
    for size in block_sizes:
        blk = np.clip(x[col : col + size], 0.0, None)
        s = blk.sum()
        blocks.append(blk / s if s > 0 else np.full(size, 1.0 / size))
        col += size
    lam = np.clip(-dual[k:], 0.0, None)
    total = lam.sum()
    if total <= _TOL:
        # Fall back to uniform weight on the active rows.
        achieved = rows @ np.concatenate(blocks) + off
        active = achieved >= achieved.max() - 1e-7
        lam = active / active.sum()
    else:
        lam = lam / total
    return MinimaxSolution(float(value) * scale, tuple(blocks), lam)
