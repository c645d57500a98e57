"""Monomial bases, Vandermonde matrices and empirical moment matrices.

Multi-indices are plain tuples of non-negative ints.  All modules share one
graded ordering: constant first, then by total degree, and within a degree
lexicographically descending in the exponents, i.e.

    1, x1, ..., xd, x1^2, x1 x2, ..., xd^2, x1^3, ...
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .errors import DegenerateError, InvalidInputError

MultiIndex = tuple[int, ...]

# Row count above which Gram products are accumulated blockwise and summed
# pairwise instead of in a single BLAS call.
PAIRWISE_THRESHOLD = 100_000
_BLOCK_ROWS = 8192
_INT64_MAX = np.iinfo(np.int64).max


def modulus(alpha: MultiIndex) -> int:
    return sum(alpha)


def basis_size(d: int, degree: int) -> int:
    """Number of monomials of total degree at most `degree` in `d` variables."""
    if d < 1 or degree < 0:
        raise InvalidInputError(f"need d >= 1 and degree >= 0, got d={d}, degree={degree}")
    n = comb(degree + d, d)
    if n > _INT64_MAX:
        raise OverflowError(f"basis size binom({degree + d}, {d}) exceeds int64")
    return n


@lru_cache(maxsize=64)
def _combos(d: int, degree: int) -> tuple[tuple[int, ...], ...]:
    # sorted tuples of variable indices, one per monomial, in basis order
    out: list[tuple[int, ...]] = []
    for k in range(degree + 1):
        out.extend(combinations_with_replacement(range(d), k))
    return tuple(out)


@lru_cache(maxsize=64)
def enumerate_basis(d: int, degree: int) -> tuple[MultiIndex, ...]:
    """Exponent vectors of all monomials up to `degree`, in graded order."""
    basis_size(d, degree)
    basis = []
    for c in _combos(d, degree):
        alpha = [0] * d
        for i in c:
            alpha[i] += 1
        basis.append(tuple(alpha))
    return tuple(basis)


@lru_cache(maxsize=64)
def basis_position(d: int, degree: int) -> dict[MultiIndex, int]:
    """Map from multi-index to its column in the degree-`degree` basis."""
    return {alpha: j for j, alpha in enumerate(enumerate_basis(d, degree))}


def _labelled(values):
    return np.asarray(getattr(values, "values", values), dtype=float)


@dataclass(frozen=True)
class VandermondeMatrix:
    values: np.ndarray
    degree: int
    basis: tuple[MultiIndex, ...] = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class MomentSequence:
    values: np.ndarray
    degree: int
    basis: tuple[MultiIndex, ...] = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, alpha: MultiIndex) -> float:
        return float(self.values[basis_position(len(alpha), self.degree)[tuple(alpha)]])


@dataclass(frozen=True)
class MomentMatrix:
    """Symmetric matrix [y_{a+b}] indexed by the degree-`q` monomial basis."""

    values: np.ndarray
    q: int
    basis: tuple[MultiIndex, ...] = field(repr=False)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def shape(self):
        return self.values.shape

    @property
    def dim(self) -> int:
        return len(self.basis[0])


def as_panel(data) -> np.ndarray:
    """Validate sample data and return it as an (N, d) float array.

    A 1-d input is read as N univariate samples.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidInputError(f"panel must be a non-empty N x d array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("panel contains non-finite entries")
    return x


def vandermonde(panel, degree: int) -> VandermondeMatrix:
    """Evaluate the degree-`degree` monomial basis at every sample (one row each)."""
    x = as_panel(panel)
    n, d = x.shape
    combos = _combos(d, degree)
    pos = {c: j for j, c in enumerate(combos)}
    V = np.empty((n, len(combos)))
    V[:, 0] = 1.0
    for j, c in enumerate(combos[1:], start=1):
        V[:, j] = V[:, pos[c[:-1]]] * x[:, c[-1]]
    return VandermondeMatrix(V, degree, enumerate_basis(d, degree))


def _pairwise_sum(parts: list[np.ndarray]) -> np.ndarray:
    while len(parts) > 1:
        paired = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            paired.append(parts[-1])
        parts = paired
    return parts[0]


def _column_sums(V: np.ndarray) -> np.ndarray:
    if V.shape[0] < PAIRWISE_THRESHOLD:
        return V.sum(axis=0)
    blocks = [V[i:i + _BLOCK_ROWS].sum(axis=0) for i in range(0, V.shape[0], _BLOCK_ROWS)]
    return _pairwise_sum(blocks)


def _gram(V: np.ndarray) -> np.ndarray:
    if V.shape[0] < PAIRWISE_THRESHOLD:
        G = V.T @ V
    else:
        blocks = [V[i:i + _BLOCK_ROWS].T @ V[i:i + _BLOCK_ROWS]
                  for i in range(0, V.shape[0], _BLOCK_ROWS)]
        G = _pairwise_sum(blocks)
    return 0.5 * (G + G.T)


def empirical_moments(panel, two_q: int) -> MomentSequence:
    """Sample means of every monomial up to degree `two_q`."""
    V = vandermonde(panel, two_q)
    n = V.values.shape[0]
    return MomentSequence(_column_sums(V.values) / n, two_q, V.basis)


def moment_matrix(panel, q: int) -> MomentMatrix:
    """Empirical moment matrix (1/N) V^T V for the degree-`q` basis."""
    V = vandermonde(panel, q)
    n = V.values.shape[0]
    return MomentMatrix(_gram(V.values) / n, q, V.basis)


def weighted_moment_matrix(points, weights, q: int) -> MomentMatrix:
    """Moment matrix V^T diag(weights) V of a discrete measure."""
    V = vandermonde(points, q)
    w = np.asarray(weights, dtype=float)
    if w.shape != (V.values.shape[0],):
        raise InvalidInputError("need one weight per point")
    G = (V.values * w[:, None]).T @ V.values
    return MomentMatrix(0.5 * (G + G.T), q, V.basis)


def weighted_moments(points, weights, degree: int) -> MomentSequence:
    """Moments up to `degree` of the discrete measure sum_i w_i delta_{x_i}."""
    V = vandermonde(points, degree)
    w = np.asarray(weights, dtype=float)
    if w.shape != (V.values.shape[0],):
        raise InvalidInputError("need one weight per point")
    return MomentSequence(V.values.T @ w, degree, V.basis)


def relative_error(M, V, weights) -> float:
    """Relative Frobenius error ||M - V^T diag(w) V||_F / ||M||_F.

    `V` is the Vandermonde matrix of the full sample; `weights` has one entry
    per sample and is zero off the selected scenarios.
    """
    M = _labelled(M)
    V = _labelled(V)
    w = np.asarray(weights, dtype=float).ravel()
    if V.ndim != 2 or M.shape != (V.shape[1], V.shape[1]) or w.shape[0] != V.shape[0]:
        raise InvalidInputError(
            f"non-conformable shapes M={M.shape}, V={V.shape}, weights={w.shape}")
    norm_m = np.linalg.norm(M)
    if norm_m == 0.0:
        raise DegenerateError("moment matrix has zero Frobenius norm")
    nz = np.flatnonzero(w)
    Vs = V[nz]
    approx = (Vs * w[nz, None]).T @ Vs
    return float(np.linalg.norm(M - approx) / norm_m)
