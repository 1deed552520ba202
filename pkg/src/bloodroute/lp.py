"""Dense simplex for the restricted linear master problem.

The master problem selects tours (columns) to maximize covered donation
units:

    max  sum_b d_b * delta_b
    s.t. delta_b - sum_p u_pb * lambda_p <= 0     (dual pi_b >= 0)
         sum_p lambda_p <= fleet_size             (dual mu >= 0)
         0 <= delta_b <= 1,  lambda_p >= 0

Solved with a primal simplex over bounded variables (nonbasic variables may
sit at either bound); duals come from the slack columns of the final
tableau.  Largest-coefficient pricing with a Bland's-rule fallback guards
against cycling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import Instance

_TOL = 1e-9


class LPError(RuntimeError):
    """Numerical failure (cycling guard exceeded)."""


@dataclass(frozen=True)
class Column:
    """A tour's coverage vector in the master problem."""

    id: int
    coverage: frozenset
    tour: object = field(compare=False, default=None)

    def units(self, inst: Instance) -> int:
        counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
        return sum(counts[b] for b in self.coverage)


@dataclass
class DualPrices:
    pi: dict
    mu: float


def reduced_cost(column: Column, duals: DualPrices) -> float:
    """Sum of the dual prices over the column's coverage minus the fleet dual."""
    return sum(duals.pi.get(b, 0.0) for b in column.coverage) - duals.mu


_LOWER, _UPPER, _BASIC = 0, 1, 2


def simplex_max(c, A, b, ub, max_iter_factor: int = 200):
    """Maximize c*x s.t. A x <= b, 0 <= x <= ub (ub may be inf); b >= 0.

    Returns (x, duals y, objective).  Raises LPError if the iteration guard
    trips.
    """
    A = np.asarray(A, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ub = np.asarray(ub, dtype=np.float64)
    m, n = A.shape
    N = n + m
    T = np.hstack([A, np.eye(m)])
    c_ext = np.concatenate([c, np.zeros(m)])
    ub_ext = np.concatenate([ub, np.full(m, np.inf)])
    status = np.full(N, _LOWER, dtype=np.int8)
    basis = np.arange(n, N)
    status[basis] = _BASIC
    xb = b.astype(np.float64).copy()

    bland_after = 10 * (m + N)
    hard_cap = max_iter_factor * (m + N) + 1000
    it = 0
    while True:
        it += 1
        if it > hard_cap:
            raise LPError("cycling guard exceeded")
        cb = c_ext[basis]
        r = c_ext - (cb @ T)
        enter_mask = ((status == _LOWER) & (r > _TOL)) | ((status == _UPPER) & (r < -_TOL))
        enter_mask[basis] = False
        if not enter_mask.any():
            break
        cand = np.nonzero(enter_mask)[0]
        if it <= bland_after:
            e = int(cand[np.argmax(np.abs(r[cand]))])
        else:
            e = int(cand[0])
        direction = 1.0 if status[e] == _LOWER else -1.0
        col = T[:, e] * direction
        # ratio test: basic variables hitting their lower or upper bounds
        ub_basis = ub_ext[basis]
        lims = np.full(m, np.inf)
        pos = col > _TOL
        lims[pos] = xb[pos] / col[pos]
        neg = col < -_TOL
        caps_ok = neg & np.isfinite(ub_basis)
        lims[caps_ok] = (ub_basis[caps_ok] - xb[caps_ok]) / (-col[caps_ok])
        leave_row = int(np.argmin(lims)) if m else -1
        t_best = lims[leave_row] if m else np.inf
        if t_best >= ub_ext[e] - _TOL:
            t_best = ub_ext[e]
            leave_row = -1
        if not np.isfinite(t_best):
            raise LPError("unbounded master problem")
        t_best = max(float(t_best), 0.0)
        xb -= t_best * col
        if leave_row < 0:
            status[e] = _UPPER if status[e] == _LOWER else _LOWER
            continue
        enter_val = t_best if direction > 0 else ub_ext[e] - t_best
        lv = basis[leave_row]
        status[lv] = _LOWER if pos[leave_row] else _UPPER
        basis[leave_row] = e
        status[e] = _BASIC
        piv = T[leave_row, e]
        row = T[leave_row] / piv
        T[leave_row] = row
        factor = T[:, e].copy()
        factor[leave_row] = 0.0
        T -= np.outer(factor, row)
        xb[leave_row] = enter_val

    x = np.where(status == _UPPER, np.where(np.isfinite(ub_ext), ub_ext, 0.0), 0.0)
    x[basis] = xb
    cb = c_ext[basis]
    y = cb @ T[:, n:]
    obj = float(c_ext @ x)
    return x[:n], y, obj


def solve_rlmp(columns: Sequence[Column], inst: Instance,
               forced: Optional[dict] = None, excluded: Optional[frozenset] = None):
    """Solve the restricted linear master problem.

    ``forced``/``excluded`` fix lambda variables to 1 or 0 (used by the
    integer finalization's branch-and-bound); fixed columns contribute their
    coverage on the right-hand side.  Returns (lambdas, deltas, duals,
    objective) where lambdas/deltas map ids/batches to values.
    """
    if not columns:
        raise ValueError("at least one column required")
    forced = forced or {}
    excluded = excluded or frozenset()
    free = [col for col in columns if col.id not in forced and col.id not in excluded]
    forced_cols = [col for col in columns if col.id in forced]
    batches = [(s.id, t) for s in inst.sites for t, _ in s.donations]
    counts = {(s.id, t): c for s in inst.sites for t, c in s.donations}
    B = len(batches)
    bidx = {key: k for k, key in enumerate(batches)}
    P = len(free)
    n = B + P
    m = B + 1
    A = np.zeros((m, n))
    bvec = np.zeros(m)
    cvec = np.zeros(n)
    ubv = np.concatenate([np.ones(B), np.full(P, np.inf)])
    for k, key in enumerate(batches):
        A[k, k] = 1.0
        cvec[k] = counts[key]
    for p, col in enumerate(free):
        for key in col.coverage:
            A[bidx[key], B + p] = -1.0
        A[B, B + p] = 1.0
    cover_rhs = np.zeros(B)
    for col in forced_cols:
        for key in col.coverage:
            cover_rhs[bidx[key]] += 1.0
    bvec[:B] = cover_rhs
    bvec[B] = inst.fleet_size - len(forced_cols)
    if bvec[B] < 0:
        raise ValueError("more forced columns than the fleet size")

    x, y, obj = simplex_max(cvec, A, bvec, ubv)

    lambdas = {col.id: 1.0 for col in forced_cols}
    lambdas.update({col.id: 0.0 for col in columns if col.id in excluded})
    for p, col in enumerate(free):
        lambdas[col.id] = float(x[B + p])
    deltas = {key: float(x[k]) for k, key in enumerate(batches)}
    pi = {}
    for k, key in enumerate(batches):
        val = min(max(float(y[k]), 0.0), float(counts[key]))
        pi[key] = val
    mu = max(float(y[B]), 0.0)
    return lambdas, deltas, DualPrices(pi, mu), float(obj)
