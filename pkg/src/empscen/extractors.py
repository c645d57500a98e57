"""Scenario extraction: covariance scenarios and kernel orthogonal matching pursuit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NormalizationError, NumericalBreakdownError
from .factorization import CholeskyFactors, OrthonormalEmbedding, orthonormal_embed, pivoted_cholesky
from .moments import (
    MomentSequence,
    _column_sums,
    _gram,
    as_panel,
    basis_size,
    empirical_moments,
    vandermonde,
)
from .weights import AdmmConfig, admm_weights

SOURCES = ("covariance", "omp", "maxvol", "ghtp", "lasserre")

# Householder vectors shorter than this are treated as zero (reflector = I).
_REFLECTOR_EPS = 1e-14


@dataclass
class ScenarioSet:
    """Discrete probability measure sum_i weights[i] * delta(points[i])."""

    points: np.ndarray
    weights: np.ndarray
    source: str
    selected_indices: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.source not in SOURCES:
            raise InvalidInputError(f"unknown source {self.source!r}")
        if self.points.shape[0] < 1 or self.points.shape[0] != self.weights.shape[0]:
            raise InvalidInputError("need r >= 1 points and one weight per point")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("scenario points must be finite")
        if self.weights.min() < -1e-12 or abs(self.weights.sum() - 1.0) > 1e-10:
            raise InvalidInputError("weights must lie on the probability simplex")
        if self.selected_indices is not None:
            self.selected_indices = np.asarray(self.selected_indices, dtype=int)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def moments(self, degree: int) -> np.ndarray:
        """Moments of the scenario measure up to `degree`, in basis order."""
        return vandermonde(self.points, degree).values.T @ self.weights

    def full_weights(self, n: int) -> np.ndarray:
        """Weights scattered onto the N original samples (needs selected_indices)."""
        if self.selected_indices is None:
            raise InvalidInputError(f"{self.source} scenarios are not sample points")
        w = np.zeros(n)
        np.add.at(w, self.selected_indices, self.weights)
        return w


@dataclass
class OmpTrace:
    residual_norms: list[float]
    pivot_sequence: list[int]
    rank_exhausted: bool = False


def matrix_root(M, rtol: float = 1e-14) -> np.ndarray:
    """Low-rank root R with M = R R^T by pivoted Cholesky.

    Columns are added until the residual trace is below ``rtol * trace(M)``,
    so R has the numerical rank of M as its column count.
    """
    A = np.asarray(getattr(M, "values", M), dtype=float)
    scale = float(np.trace(A)) if A.ndim == 2 else 0.0
    factors = pivoted_cholesky(A, rtol * scale, min_pivot=rtol * max(scale, 0.0))
    return factors.L


def covariance_scenarios(M, rtol: float = 1e-14) -> ScenarioSet:
    """Uniformly weighted scenarios reproducing a degree-1 moment matrix exactly.

    A single Householder reflection maps the first row of a root R of M onto
    a constant vector; the rows of sqrt(r) * H R^T are then [1, xi_j].
    """
    A = np.asarray(getattr(M, "values", M), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
        raise InvalidInputError(f"expected a (d+1) x (d+1) moment matrix, got {A.shape}")
    if getattr(M, "q", 1) != 1:
        raise InvalidInputError("covariance scenarios need the degree-1 moment matrix")
    if abs(A[0, 0] - 1.0) > 1e-8:
        raise NormalizationError(f"M[0, 0] = {A[0, 0]!r}, expected 1")
    R = matrix_root(A, rtol)
    r = R.shape[1]
    first = R[0]
    v = first - 1.0 / np.sqrt(r)
    vv = float(v @ v)
    Rt = R.T
    if np.sqrt(vv) > _REFLECTOR_EPS:
        Rt = Rt - (2.0 / vv) * np.outer(v, v @ Rt)
    V = np.sqrt(r) * Rt
    return ScenarioSet(V[:, 1:], np.full(r, 1.0 / r), "covariance",
                       metadata={"rank": r, "reflector_norm": np.sqrt(vv)})


def omp_select(embedding: OrthonormalEmbedding, tolerance: float = 1e-12,
               max_iter: int | None = None, *, breakdown_tol: float = 1e-6,
               pivot_rtol: float = 1e-12, tie_rtol: float = 1e-10):
    """Greedy kernel OMP on K = N Q Q^T driven by the residual h = Q y_tilde.

    Each step pivots on the largest |h| entry (entries within `tie_rtol` of
    the maximum are tied and the lowest index wins; selected samples are
    excluded), appends a Newton basis column of K, computed
    as N Q (Q^T e_j) so K is never formed, and removes its component from h.
    Stops when ||h_r|| / ||h|| <= tolerance, after `max_iter` steps, or when
    the kernel rank is exhausted.

    Returns
    -------
    indices : ndarray of int
    trace : OmpTrace
    factors : CholeskyFactors
        Low-rank factors of K with B^T L = I.

    Raises
    ------
    NumericalBreakdownError
        If the pivot diagonal vanishes while the relative residual is still
        above `breakdown_tol`.
    """
    if not tolerance > 0:
        raise InvalidInputError("tolerance must be positive")
    Q = np.asarray(embedding.Q, dtype=float)
    n, rank_q = Q.shape
    cap = rank_q if max_iter is None else min(int(max_iter), rank_q)
    if cap < 1:
        raise InvalidInputError("max_iter must be >= 1")

    h0 = Q @ np.asarray(embedding.y_tilde, dtype=float)
    h_norm = float(np.linalg.norm(h0))
    if h_norm == 0.0:
        raise InvalidInputError("residual vector h is zero")
    d = n * np.einsum("ij,ij->i", Q, Q)
    floor = pivot_rtol * float(d.max())
    L = np.zeros((n, cap))
    Bc = np.zeros((cap, cap))   # rows of B at the pivots, in pivot order
    h = h0.copy()
    ind: list[int] = []
    history = [1.0]
    err = 1.0
    exhausted = False
    while err > tolerance and len(ind) < cap:
        r = len(ind)
        score = np.abs(h)
        score[ind] = -np.inf
        top = score.max()
        j = int(np.flatnonzero(score >= top - tie_rtol * top)[0])
        dj = d[j]
        if dj <= floor:
            if err <= breakdown_tol:
                exhausted = True
                break
            raise NumericalBreakdownError(
                f"zero pivot at step {r + 1} with relative residual {err:.3e}")
        s = np.sqrt(dj)
        lj = L[j, :r]
        ell = (n * (Q @ Q[j]) - L[:, :r] @ lj) / s
        Bc[:r, r] = -(Bc[:r, :r] @ lj) / s
        Bc[r, r] = 1.0 / s
        ind.append(j)
        coef = float(Bc[:r + 1, r] @ h0[ind])
        h -= coef * ell
        L[:, r] = ell
        d -= ell * ell
        d[j] = 0.0
        err = float(np.linalg.norm(h)) / h_norm
        history.append(err)
    if len(ind) == rank_q:
        exhausted = True

    r = len(ind)
    B = np.zeros((n, r))
    B[ind] = Bc[:r, :r]
    factors = CholeskyFactors(L[:, :r].copy(), B, list(ind), float(np.abs(d).sum()),
                              [], exhausted)
    return np.array(ind, dtype=int), OmpTrace(history, list(ind), exhausted), factors


def standardize(x: np.ndarray) -> np.ndarray:
    """Per-coordinate affine map to zero mean and unit spread (constant columns kept at 0)."""
    center = x.mean(axis=0)
    spread = x.std(axis=0)
    spread[spread == 0] = 1.0
    return (x - center) / spread


def sample_embedding(panel, degree: int, *, standardized: bool = True,
                     chol_rtol: float = 1e-13) -> tuple[OrthonormalEmbedding, CholeskyFactors]:
    """Orthonormal embedding of the degree-`degree` polynomials on the sample.

    The span of the basis evaluated on the sample is invariant under affine
    changes of coordinates, so the embedding is built on the standardized
    panel by default; this avoids the rank loss that raw monomials suffer
    for off-centre data.
    """
    x = as_panel(panel)
    z = standardize(x) if standardized else x
    V = vandermonde(z, degree).values
    n = V.shape[0]
    M = _gram(V) / n
    y = _column_sums(V) / n
    trace = float(np.trace(M))
    factors = pivoted_cholesky(M, chol_rtol * trace, min_pivot=chol_rtol * float(M.diagonal().max()))
    return orthonormal_embed(V, factors, y, refine=True), factors


def retrieve_weights(panel, indices, q: int, config: AdmmConfig | None = None,
                     y_hat: MomentSequence | None = None):
    """ADMM weights for the samples at `indices` against the panel moments up to 2q."""
    x = as_panel(panel)
    idx = np.asarray(indices, dtype=int)
    if y_hat is None:
        y_hat = empirical_moments(x, 2 * q)
    return admm_weights(vandermonde(x[idx], 2 * q), y_hat, config)


def extract_scenarios(panel, q: int, tolerance: float = 1e-12, max_iter: int | None = None,
                      weight_config: AdmmConfig | None = None, *, standardized: bool = True,
                      chol_rtol: float = 1e-13) -> tuple[ScenarioSet, OmpTrace]:
    """Two-stage extraction: kernel OMP picks sample points, ADMM fits their weights.

    `max_iter` defaults to the basis size m_{2q}, which bounds the rank.
    """
    if q < 0:
        raise InvalidInputError("q must be non-negative")
    x = as_panel(panel)
    degree = 2 * q
    m = basis_size(x.shape[1], degree)
    emb, factors = sample_embedding(x, degree, standardized=standardized, chol_rtol=chol_rtol)
    ind, trace, _ = omp_select(emb, tolerance, m if max_iter is None else max_iter)
    cfg = weight_config or AdmmConfig()
    res = retrieve_weights(x, ind, q, cfg)
    meta = {
        "q": q,
        "tolerance": tolerance,
        "max_iter": m if max_iter is None else max_iter,
        "embedding_rank": emb.rank,
        "standardized": standardized,
        "chol_rtol": chol_rtol,
        "admm": cfg.as_dict(),
        "admm_iterations": res.iterations,
        "admm_converged": res.converged,
        "admm_objective": res.objective,
        "admm_polished": res.polished,
    }
    return ScenarioSet(x[ind], res.weights, "omp", ind, meta), trace
