"""Probability weights on the simplex by ADMM.

Solves  min_w 1/2 ||A w - y||^2  s.t.  w >= 0, sum(w) = 1,  where A is the
transposed Vandermonde matrix of the scenarios, via the consensus splitting
f(x) = 1/2 ||A x - y||^2, g(z) = indicator of the simplex, x = z.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidInputError


@dataclass(frozen=True)
class AdmmConfig:
    rho: float = 1.0
    max_iter: int = 5000
    primal_tol: float = 1e-10
    dual_tol: float = 1e-10
    # residual balancing: every `adapt_every` iterations rho is rescaled by
    # `rho_factor` when one residual exceeds the other by `balance`
    adaptive_rho: bool = True
    balance: float = 10.0
    rho_factor: float = 2.0
    adapt_every: int = 10
    # active-set refinement of the ADMM iterate on its support
    polish: bool = True
    polish_max_iter: int = 500

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidInputError("rho must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")
        if not (self.primal_tol > 0 and self.dual_tol > 0):
            raise InvalidInputError("tolerances must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class AdmmResult:
    weights: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    converged: bool
    objective: float
    rho: float
    polished: bool = False


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum(w) = 1} (sort and threshold)."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise InvalidInputError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _objective(A, w, y):
    return float(np.linalg.norm(A @ w - y))


def _sum_one_lstsq(A, y):
    """min ||A w - y|| subject to sum(w) = 1, via the null space of 1^T."""
    width = A.shape[1]
    base = np.full(width, 1.0 / width)
    if width == 1:
        return base
    # orthonormal basis of {x : sum(x) = 0}
    H = np.linalg.qr(np.ones((width, 1)), mode="complete")[0][:, 1:]
    AH = A @ H
    t = np.linalg.lstsq(AH, y - A @ base, rcond=None)[0]
    return base + H @ t


def polish_weights(A, y, w, max_iter: int = 500, tol: float = 1e-12):
    """Primal active-set refinement of a feasible simplex point `w`.

    Solves the equality-constrained subproblem on the current support, steps
    back to feasibility when it leaves the orthant, and frees the index with
    the most negative multiplier until the KKT conditions hold.
    Returns the refined point and whether the KKT check passed.
    """
    w = np.asarray(w, dtype=float).copy()
    scale = max(np.abs(A).max(), np.abs(y).max(), 1e-300)
    A = A / scale
    y = y / scale
    free = w > tol
    if not free.any():
        free[np.argmax(w)] = True
    w[~free] = 0.0
    w /= w.sum()
    for _ in range(max_iter):
        idx = np.flatnonzero(free)
        target = np.zeros_like(w)
        target[idx] = _sum_one_lstsq(A[:, idx], y)
        if target[idx].min() >= 0:
            w = target
            g = A.T @ (A @ w - y)
            nu = -g[idx].mean()
            mult = g + nu
            mult[idx] = np.inf
            k = int(np.argmin(mult))
            if mult[k] >= -tol * max(1.0, np.abs(g).max()):
                return w, True
            free[k] = True
            continue
        step = w[idx] - target[idx]
        shrinking = step > 0
        ratios = np.full(idx.size, np.inf)
        ratios[shrinking] = w[idx][shrinking] / step[shrinking]
        alpha = min(1.0, float(ratios.min()))
        w = w + alpha * (target - w)
        blocking = idx[ratios <= alpha + 1e-15]
        free[blocking] = False
        w[~free] = 0.0
        w = np.maximum(w, 0.0)
        w /= w.sum()
        if not free.any():
            free[np.argmax(w)] = True
    return w, False


def admm_weights(V_sel, y_hat, config: AdmmConfig | None = None) -> AdmmResult:
    """Simplex-constrained least squares fit of scenario weights to moments.

    Parameters
    ----------
    V_sel : (r, m) array or VandermondeMatrix
        Monomial basis evaluated at the r scenarios.
    y_hat : (m,) array or MomentSequence
        Target moments over the same basis.
    config : AdmmConfig, optional

    Returns
    -------
    AdmmResult
        The best feasible iterate seen (never worse than the uniform start);
        ``converged`` is False if `max_iter` was hit first.
    """
    cfg = config or AdmmConfig()
    A = np.asarray(getattr(V_sel, "values", V_sel), dtype=float).T
    y = np.asarray(getattr(y_hat, "values", y_hat), dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != y.shape[0] or A.shape[1] < 1:
        raise InvalidInputError(f"non-conformable shapes V_sel^T={A.shape}, y_hat={y.shape}")
    r = A.shape[1]
    z = np.full(r, 1.0 / r)
    if r == 1:
        return AdmmResult(z, 0, 0.0, 0.0, True, _objective(A, z, y), cfg.rho)

    AtA = A.T @ A
    Aty = A.T @ y
    scale = max(float(np.trace(AtA)) / r, 1e-300)
    rho_min, rho_max = 1e-12 * scale, 1e12 * scale
    rho = cfg.rho
    chol = cho_factor(AtA + rho * np.eye(r))
    u = np.zeros(r)
    best_w, best_obj = z.copy(), _objective(A, z, y)
    sqrt_r = np.sqrt(r)
    prim = dual = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        x = cho_solve(chol, Aty + rho * (z - u))
        z_old = z
        z = project_simplex(x + u)
        u = u + x - z
        prim = float(np.linalg.norm(x - z))
        dual = float(rho * np.linalg.norm(z - z_old))

        obj = _objective(A, z, y)
        if obj < best_obj:
            best_w, best_obj = z.copy(), obj

        eps_pri = sqrt_r * cfg.primal_tol + cfg.primal_tol * max(np.linalg.norm(x),
                                                                 np.linalg.norm(z))
        eps_dual = sqrt_r * cfg.dual_tol + cfg.dual_tol * rho * np.linalg.norm(u)
        if prim <= eps_pri and dual <= eps_dual:
            converged = True
            break
        if cfg.adaptive_rho and it % cfg.adapt_every == 0:
            if prim > cfg.balance * dual and rho < rho_max:
                factor = cfg.rho_factor
            elif dual > cfg.balance * prim and rho > rho_min:
                factor = 1.0 / cfg.rho_factor
            else:
                continue
            rho *= factor
            u /= factor
            chol = cho_factor(AtA + rho * np.eye(r))

    polished = False
    if cfg.polish:
        w_pol, kkt = polish_weights(A, y, best_w, cfg.polish_max_iter)
        w_pol = project_simplex(w_pol)
        obj = _objective(A, w_pol, y)
        if obj <= best_obj:
            best_w, best_obj, polished = w_pol, obj, kkt
    return AdmmResult(best_w, it, prim, dual, converged, best_obj, rho, polished)
