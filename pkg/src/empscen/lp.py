"""Dense two-phase revised simplex method for small linear programs.

Problems are stated as

    minimize c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= lower

where entries of `lower` may be -inf (free variables).  Internally the
problem is brought to standard form  min c'^T z, A z = b, z >= 0, b >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"

# entering columns need a pivot at least this large relative to the column
PIVOT_RTOL = 1e-7


@dataclass
class LpProblem:
    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if n == 0:
            raise InvalidInputError("LP needs at least one variable")
        self.A_ub, self.b_ub = _block(self.A_ub, self.b_ub, n, "inequality")
        self.A_eq, self.b_eq = _block(self.A_eq, self.b_eq, n, "equality")
        self.lower = np.zeros(n) if self.lower is None else np.asarray(self.lower, float).ravel()
        if self.lower.shape != (n,) or np.any(np.isposinf(self.lower)) or np.any(np.isnan(self.lower)):
            raise InvalidInputError("lower bounds must be a length-n vector of finite values or -inf")

    @property
    def n_vars(self) -> int:
        return self.c.size


def _block(A, b, n, what):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if A.shape[1] != n or A.shape[0] != b.size:
        raise InvalidInputError(f"{what} block has shape {A.shape} with {b.size} bounds, n={n}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidInputError(f"{what} block has non-finite entries")
    return A, b


@dataclass
class LpResult:
    x: np.ndarray | None
    objective: float
    status: str
    iterations: int
    duals_ub: np.ndarray | None = None   # <= 0 at optimality
    duals_eq: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class _Simplex:
    """Revised simplex on  min c^T z, A z = b, z >= 0  with an explicit basis inverse."""

    def __init__(self, A, b, tol, max_iter, refactor_every, degenerate_limit):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.tol = tol
        self.max_iter = max_iter
        self.refactor_every = refactor_every
        self.degenerate_limit = degenerate_limit
        self.iterations = 0

    def refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def run(self, c, allowed):
        """Optimize from the current basis; returns a status string."""
        degenerate = 0
        ref = np.ones(self.n)      # devex reference weights
        while True:
            if self.iterations >= self.max_iter:
                return ITERATION_LIMIT
            y = c[self.basis] @ self.Binv
            rc = c - y @ self.A
            rc[self.basis] = 0.0
            rc[~allowed] = 0.0
            scale = 1.0 + np.abs(c).max()
            candidates = np.flatnonzero(rc < -self.tol * scale)
            if candidates.size == 0:
                if self.since_refactor:
                    self.refactor()     # confirm on a fresh inverse
                    continue
                return OPTIMAL
            # devex pricing; Bland's rule after a run of degenerate pivots
            bland = degenerate >= self.degenerate_limit
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(rc[candidates] ** 2 / ref[candidates])])
            col = self.Binv @ self.A[:, j]
            piv_tol = PIVOT_RTOL * max(1.0, float(np.abs(col).max()))
            pos = np.flatnonzero(col > piv_tol)
            if pos.size == 0:
                if self.since_refactor:
                    self.refactor()
                    continue
                return UNBOUNDED
            if bland:
                ratios = self.xB[pos] / col[pos]
                best = ratios.min()
                ties = pos[ratios <= best + self.tol * max(1.0, abs(best))]
                leave = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            else:
                # Harris two-pass test: relaxed bound, then the largest pivot under it
                bound = ((self.xB[pos] + self.tol) / col[pos]).min()
                ties = pos[self.xB[pos] / col[pos] <= bound]
                leave = int(ties[np.argmax(col[ties])])
            theta = max(self.xB[leave] / col[leave], 0.0)
            degenerate = degenerate + 1 if theta <= self.tol else 0
            alpha_row = (self.Binv[leave] @ self.A) / col[leave]
            ratio_sq = alpha_row ** 2
            left = self.basis[leave]
            ref = np.maximum(ref, ratio_sq * ref[j])
            ref[left] = max(ref[j] / col[leave] ** 2, 1.0)
            self.pivot(leave, j, col, theta)

    def pivot(self, leave, j, col, theta):
        self.xB = self.xB - theta * col
        self.xB[leave] = theta
        # eta update of the basis inverse
        piv = col[leave]
        row = self.Binv[leave] / piv
        self.Binv -= np.outer(col, row)
        self.Binv[leave] = row
        self.basis[leave] = j
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= self.refactor_every:
            self.refactor()
        np.maximum(self.xB, 0.0, out=self.xB)


def _standard_form(problem: LpProblem):
    """Columns: shifted/split originals, then one slack per inequality row."""
    finite = np.isfinite(problem.lower)
    shift = np.where(finite, problem.lower, 0.0)
    free = np.flatnonzero(~finite)
    n, k_ub, k_eq = problem.n_vars, problem.A_ub.shape[0], problem.A_eq.shape[0]
    A_orig = np.vstack([problem.A_ub, problem.A_eq])
    b = np.concatenate([problem.b_ub, problem.b_eq]) - A_orig @ shift
    A = np.hstack([A_orig, -A_orig[:, free],
                   np.vstack([np.eye(k_ub), np.zeros((k_eq, k_ub))])])
    c = np.concatenate([problem.c, -problem.c[free], np.zeros(k_ub)])
    sign = np.where(b < 0, -1.0, 1.0)
    return A * sign[:, None], b * sign, c, sign, shift, free


def solve_lp(problem: LpProblem, *, tol: float = 1e-9, max_iter: int = 50_000,
             refactor_every: int = 50, degenerate_limit: int = 500) -> LpResult:
    """Two-phase revised simplex.

    Phase one minimizes the sum of artificial variables from the all-artificial
    basis, drives remaining artificials out (dropping redundant rows), then
    phase two optimizes the true objective.  Pricing uses devex reference
    weights, switching to Bland's rule after `degenerate_limit` consecutive
    degenerate pivots so cycling cannot persist.
    """
    A, b, c, sign, shift, free = _standard_form(problem)
    m, n_std = A.shape
    n = problem.n_vars
    k_ub = problem.A_ub.shape[0]

    if m == 0:
        # only bounds: optimal at the lower bounds unless some direction is unbounded
        if np.any(c < -tol) or free.size and np.any(np.abs(problem.c[free]) > tol):
            return LpResult(None, -np.inf, UNBOUNDED, 0)
        x = shift.copy()
        return LpResult(x, float(problem.c @ x), OPTIMAL, 0, np.zeros(0), np.zeros(0), problem.c.copy())

    # phase one on [A | I]; rows whose slack enters with a +1 start from the
    # slack, the others from an artificial variable
    A1 = np.hstack([A, np.eye(m)])
    slack_rows = np.flatnonzero((np.arange(m) < k_ub) & (sign > 0))
    n_struct = n_std - k_ub
    start = list(range(n_std, n_std + m))
    for i in slack_rows:
        start[i] = n_struct + i
    c1 = np.zeros(n_std + m)
    c1[[v for v in start if v >= n_std]] = 1.0
    allowed = np.ones(n_std + m, dtype=bool)
    allowed[n_std + slack_rows] = False
    sx = _Simplex(A1, b, tol, max_iter, refactor_every, degenerate_limit)
    sx.basis = start
    sx.refactor()
    status = sx.run(c1, allowed)
    if status == ITERATION_LIMIT:
        return LpResult(None, np.nan, status, sx.iterations)
    infeas = float(c1[sx.basis] @ sx.xB)
    if infeas > tol * max(1.0, np.abs(b).max()) * 10:
        return LpResult(None, np.nan, INFEASIBLE, sx.iterations)

    # drive artificials out of the basis, dropping rows that are redundant
    keep = np.ones(m, dtype=bool)
    for pos in range(m):
        var = sx.basis[pos]
        if var < n_std:
            continue
        row = sx.Binv[pos] @ A
        cand = [j for j in np.flatnonzero(np.abs(row) > 1e-9) if j not in sx.basis]
        if cand:
            j = int(cand[np.argmax(np.abs(row[cand]))])
            col = sx.Binv @ A1[:, j]
            sx.pivot(pos, j, col, 0.0)
        else:
            keep[pos] = False
    if not keep.all():
        redundant_rows = [sx.basis[pos] - n_std for pos in range(m) if not keep[pos]]
        rows = np.setdiff1d(np.arange(m), redundant_rows)
        basis = [v for pos, v in enumerate(sx.basis) if keep[pos]]
    else:
        rows = np.arange(m)
        basis = list(sx.basis)

    A2 = A[rows]
    sx2 = _Simplex(A2, b[rows], tol, max_iter - sx.iterations, refactor_every, degenerate_limit)
    sx2.basis = basis
    sx2.refactor()
    status = sx2.run(c, np.ones(n_std, dtype=bool))
    iters = sx.iterations + sx2.iterations
    if status != OPTIMAL:
        return LpResult(None, -np.inf if status == UNBOUNDED else np.nan, status, iters)
    sx2.refactor()

    z = np.zeros(n_std)
    z[sx2.basis] = np.maximum(sx2.xB, 0.0)
    x = shift.copy()
    x += z[:n]
    x[free] -= z[n:n + free.size]

    y_rows = c[sx2.basis] @ sx2.Binv
    y = np.zeros(m)
    y[rows] = y_rows
    y *= sign
    duals_ub, duals_eq = y[:k_ub], y[k_ub:]
    reduced = problem.c - problem.A_ub.T @ duals_ub - problem.A_eq.T @ duals_eq
    return LpResult(x, float(problem.c @ x), OPTIMAL, iters, duals_ub, duals_eq, reduced)
