"""Pivoted Cholesky factorization with a concurrently built biorthogonal basis.

For a PSD matrix M the greedy factorization returns M ~ L L^T together with
B such that B^T L = I.  B is supported on the pivot rows only, so B B^T is a
reflexive generalized inverse of M, and it equals M^{-1} when M has full rank.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import FlatnessError, InvalidInputError, NotPSDError

# Negative residual diagonals below -PSD_SLACK * max(1, max diag M) signal an
# indefinite input; smaller negatives are rounding.
PSD_SLACK = 1e-10


@dataclass
class CholeskyFactors:
    L: np.ndarray
    B: np.ndarray
    pivots: list[int]
    residual_trace: float
    err_history: list[float] = field(default_factory=list)
    zero_pivot: bool = False

    @property
    def rank(self) -> int:
        return self.L.shape[1]


@dataclass
class OrthonormalEmbedding:
    """Q = V B / sqrt(N) with orthonormal columns and y_tilde = B^T y / sqrt(N)."""

    Q: np.ndarray
    y_tilde: np.ndarray
    B: np.ndarray

    @property
    def rank(self) -> int:
        return self.Q.shape[1]

    @property
    def n_samples(self) -> int:
        return self.Q.shape[0]


def _as_symmetric(M) -> np.ndarray:
    A = np.asarray(getattr(M, "values", M), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError("matrix contains non-finite entries")
    norm = np.linalg.norm(A)
    if norm > 0 and np.linalg.norm(A - A.T) > 1e-12 * norm:
        raise InvalidInputError("matrix is not symmetric")
    return A


def _factor(M, tolerance, block=None, max_rank=None, min_pivot=0.0):
    A = _as_symmetric(M)
    m = A.shape[0]
    if tolerance < 0:
        raise InvalidInputError("tolerance must be non-negative")
    block = m if block is None else int(block)
    if not 1 <= block <= m:
        raise InvalidInputError(f"block must lie in [1, {m}], got {block}")
    max_rank = block if max_rank is None else min(int(max_rank), block)

    d = np.diag(A).copy()
    slack = PSD_SLACK * max(1.0, float(d.max(initial=0.0)))
    if d.min() < -slack:
        raise NotPSDError(f"negative diagonal entry {d.min():.3e}")

    L = np.zeros((m, max_rank))
    B = np.zeros((m, max_rank))
    pivots: list[int] = []
    err = float(np.abs(d).sum())
    history = [err]
    zero_pivot = False
    r = 0
    while err > tolerance and r < max_rank:
        j = int(np.argmax(d[:block]))
        dj = d[j]
        if dj <= min_pivot:
            zero_pivot = True
            break
        lj = L[j, :r]
        s = np.sqrt(dj)
        L[:, r] = (A[:, j] - L[:, :r] @ lj) / s
        B[:, r] = -(B[:, :r] @ lj) / s
        B[j, r] += 1.0 / s
        d -= L[:, r] ** 2
        d[j] = 0.0
        pivots.append(j)
        r += 1
        if d.min() < -slack:
            raise NotPSDError(f"negative Schur complement diagonal {d.min():.3e} "
                              f"after {r} pivots")
        err = float(np.abs(d).sum())
        history.append(err)
    return CholeskyFactors(L[:, :r].copy(), B[:, :r].copy(), pivots, err, history,
                           zero_pivot)


def pivoted_cholesky(M, tolerance: float = 0.0, *, max_rank=None,
                     min_pivot: float = 0.0) -> CholeskyFactors:
    """Greedy pivoted Cholesky decomposition M ~ L L^T with biorthogonal B.

    Each step pivots on the largest remaining Schur-complement diagonal
    (lowest index on ties).  Iteration stops once the trace of the residual,
    ||d||_1, drops to `tolerance` (absolute), after `max_rank` steps, or when
    the largest remaining diagonal is <= `min_pivot`.  The last case sets
    ``zero_pivot`` and emits a RuntimeWarning if the residual is still above
    tolerance.

    Raises
    ------
    NotPSDError
        If a residual diagonal goes negative beyond rounding.
    """
    factors = _factor(M, tolerance, max_rank=max_rank, min_pivot=min_pivot)
    if factors.zero_pivot and factors.residual_trace > tolerance:
        warnings.warn(f"pivoted Cholesky stopped on a non-positive pivot at rank {factors.rank} "
                      f"with residual trace {factors.residual_trace:.3e}", RuntimeWarning,
                      stacklevel=2)
    return factors


def pivoted_cholesky_flat(M, tolerance: float, block: int, *, max_rank=None,
                          min_pivot: float = 0.0, rank: int | None = None) -> CholeskyFactors:
    """Pivoted Cholesky with pivots restricted to the leading `block` indices.

    Used on flat extensions, where the leading block is the moment matrix of
    one degree lower and already carries the full rank.  With `rank` set,
    exactly that many pivots are taken (fewer only on a non-positive pivot)
    and `tolerance` serves solely as the flatness test on what remains.

    Raises
    ------
    FlatnessError
        If the residual trace cannot be brought to `tolerance` with pivots from
        the leading block.
    """
    if rank is None:
        factors = _factor(M, tolerance, block=block, max_rank=max_rank, min_pivot=min_pivot)
    else:
        factors = _factor(M, 0.0, block=block, max_rank=rank, min_pivot=min_pivot)
    if factors.residual_trace > tolerance:
        raise FlatnessError(
            f"residual trace {factors.residual_trace:.3e} exceeds tolerance {tolerance:.3e} "
            f"after {factors.rank} pivots from the leading {block} indices")
    return factors


def orthonormal_embed(V, factors: CholeskyFactors, y_hat, *, refine: bool = False
                      ) -> OrthonormalEmbedding:
    """Orthonormal sample embedding Q = V B / sqrt(N) and y_tilde = B^T y / sqrt(N).

    `factors` must come from the moment matrix (1/N) V^T V with the rank
    exhausted.  With ``refine=True`` one Cholesky-QR sweep re-orthonormalizes
    Q (and B accordingly), which keeps Q^T Q = I on ill-conditioned inputs.
    """
    Vm = np.asarray(getattr(V, "values", V), dtype=float)
    y = np.asarray(getattr(y_hat, "values", y_hat), dtype=float).ravel()
    B = factors.B
    if Vm.ndim != 2 or Vm.shape[1] != B.shape[0] or y.shape[0] != B.shape[0]:
        raise InvalidInputError(
            f"non-conformable shapes V={Vm.shape}, B={B.shape}, y_hat={y.shape}")
    n = Vm.shape[0]
    root_n = np.sqrt(n)
    Q = Vm @ B / root_n
    if refine and B.shape[1] > 0:
        R = np.linalg.cholesky(Q.T @ Q).T
        Q = solve_triangular(R, Q.T, trans="T", lower=False).T
        B = solve_triangular(R, B.T, trans="T", lower=False).T
    return OrthonormalEmbedding(Q, B.T @ y / root_n, B)
