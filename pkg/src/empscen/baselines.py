"""Comparison algorithms: greedy maximum volume, graded hard thresholding
pursuit, l1-regularized least squares and moment-matrix atom extraction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import schur

from .errors import ExtractionError, FlatnessError, InvalidInputError
from .extractors import ScenarioSet, retrieve_weights, sample_embedding
from .factorization import OrthonormalEmbedding, pivoted_cholesky_flat
from .moments import (
    as_panel,
    basis_position,
    basis_size,
    enumerate_basis,
    moment_matrix,
    relative_error,
    vandermonde,
)
from .weights import AdmmConfig, admm_weights


def _rows_of(Q) -> np.ndarray:
    return np.asarray(getattr(Q, "Q", Q), dtype=float)


def maxvol_select(Q, k: int | None = None, tie_rtol: float = 1e-12) -> np.ndarray:
    """Greedy maximum-volume selection of `k` rows of Q (columns of W = Q^T).

    Each step takes the column of W with the largest remaining squared norm
    and removes its direction from every other column, so the norms are the
    down-dated values ||W_m||^2 - (W_m^T u)^2 with u the normalized residual
    of the pick.  Norms within `tie_rtol` of the maximum count as tied and
    the lowest index wins.
    """
    R = _rows_of(Q).copy()
    if R.ndim != 2:
        raise InvalidInputError("expected an N x r matrix")
    n, r = R.shape
    k = r if k is None else int(k)
    if not 1 <= k <= min(n, r):
        raise InvalidInputError(f"k must lie in [1, {min(n, r)}], got {k}")
    norms = np.einsum("ij,ij->i", R, R)
    chosen: list[int] = []
    for _ in range(k):
        score = norms.copy()
        score[chosen] = -np.inf
        top = score.max()
        m = int(np.flatnonzero(score >= top - tie_rtol * abs(top))[0])
        if norms[m] <= 0.0:
            raise InvalidInputError(f"W has rank {len(chosen)} < k = {k}")
        chosen.append(m)
        u = R[m] / np.sqrt(norms[m])
        R -= np.outer(R @ u, u)
        norms = np.einsum("ij,ij->i", R, R)
    return np.array(chosen, dtype=int)


@dataclass
class GhtpResult:
    indices: np.ndarray
    x: np.ndarray
    residual_norms: list[float]
    support_sizes: list[int]
    rank_deficient: bool = False


def ghtp_select(A, y, tolerance: float = 1e-10, max_iter: int | None = None) -> GhtpResult:
    """Graded hard thresholding pursuit for a sparse solution of A x ~ y.

    Iteration k keeps the k largest entries of x - A^T (A x - y) (stable order,
    so lower indices win ties) and refits x by least squares on that support.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if A.ndim != 2 or A.shape[0] != y.shape[0]:
        raise InvalidInputError(f"non-conformable shapes A={A.shape}, y={y.shape}")
    n = A.shape[1]
    cap = min(n, A.shape[0]) if max_iter is None else min(int(max_iter), n)
    x = np.zeros(n)
    err = float(np.linalg.norm(y))
    history = [err]
    sizes: list[int] = []
    deficient = False
    k = 0
    while err > tolerance and k < cap:
        k += 1
        proxy = x - A.T @ (A @ x - y)
        support = np.sort(np.argsort(-np.abs(proxy), kind="stable")[:k])
        coef, _, rank, _ = np.linalg.lstsq(A[:, support], y, rcond=None)
        deficient |= rank < k
        x = np.zeros(n)
        x[support] = coef
        err = float(np.linalg.norm(A @ x - y))
        history.append(err)
        sizes.append(support.size)
    return GhtpResult(np.flatnonzero(x), x, history, sizes, bool(deficient))


@dataclass
class BasisPursuitResult:
    weights: np.ndarray
    iterations: int
    converged: bool


def basis_pursuit_solve(Q, y_tilde, lam: float, tol: float = 1e-12,
                        max_iter: int = 10_000) -> BasisPursuitResult:
    """Proximal gradient (soft thresholding) for 1/2 ||Q^T w - y||^2 + lam ||w||_1."""
    if not lam > 0:
        raise InvalidInputError("lambda must be positive")
    Qm = _rows_of(Q)
    y = np.asarray(y_tilde, dtype=float).ravel()
    if Qm.ndim != 2 or Qm.shape[1] != y.shape[0]:
        raise InvalidInputError(f"non-conformable shapes Q={Qm.shape}, y={y.shape}")
    lipschitz = float(np.linalg.norm(Qm, 2)) ** 2
    step = 1.0 / max(lipschitz, 1e-300)
    w = np.zeros(Qm.shape[0])
    for it in range(1, max_iter + 1):
        g = Qm @ (Qm.T @ w - y)
        v = w - step * g
        w_new = np.sign(v) * np.maximum(np.abs(v) - step * lam, 0.0)
        delta = float(np.abs(w_new - w).max())
        w = w_new
        if delta <= tol:
            return BasisPursuitResult(w, it, True)
    return BasisPursuitResult(w, max_iter, False)


def basis_pursuit_constant(n: int, lam: float) -> float:
    """Closed-form level c of the constant minimizer c * 1."""
    return (1.0 - n * lam) / n if 1.0 / n > lam else 0.0


@dataclass
class EchelonFactor:
    """Column echelon form of a Cholesky factor: rows at `pivots` form I_r."""

    L_tilde: np.ndarray
    pivots: list[int]
    pivot_rows: list[tuple[int, ...]]


@dataclass
class MultiplicationMatrices:
    matrices: list[np.ndarray]
    row_indices: list[list[int]] = field(default_factory=list)


def echelon_form(L, pivots, basis) -> EchelonFactor:
    L = np.asarray(L, dtype=float)
    lead = L[pivots]
    L_tilde = np.linalg.solve(lead.T, L.T).T
    L_tilde[pivots] = np.eye(len(pivots))
    return EchelonFactor(L_tilde, list(pivots), [basis[p] for p in pivots])


def multiplication_matrices(echelon: EchelonFactor, d: int, degree: int) -> MultiplicationMatrices:
    """Rows of the echelon factor at alpha_j + e_i, one r x r matrix per coordinate."""
    pos = basis_position(d, degree)
    mats, rows = [], []
    for i in range(d):
        idx = []
        for alpha in echelon.pivot_rows:
            shifted = list(alpha)
            shifted[i] += 1
            key = tuple(shifted)
            if key not in pos:
                raise FlatnessError(f"shifted index {key} lies outside the degree-{degree} basis")
            idx.append(pos[key])
        rows.append(idx)
        mats.append(echelon.L_tilde[idx])
    return MultiplicationMatrices(mats, rows)


def lasserre_extract(M_flat, q: int | None = None, r: int | None = None, seed: int = 0, *,
                     d: int | None = None, rtol: float = 1e-10, imag_tol: float = 1e-8,
                     check_tol: float = 1e-6,
                     weight_config: AdmmConfig | None = None) -> ScenarioSet:
    """Atoms and weights of a flat moment matrix via joint eigenvalues.

    `M_flat` is the moment matrix for the degree-`degree` basis; pivoting is
    restricted to the leading block of monomials of degree <= q (default
    degree - 1).  The multiplication matrices are mixed with seeded random
    convex weights and triangularized by a real Schur form; atoms come out
    ordered by the diagonal of T.  Given `r`, the factorization takes exactly
    r pivots and `rtol` only certifies that the remainder is negligible.

    Raises
    ------
    FlatnessError
        The leading block does not carry the full rank.
    ExtractionError
        Complex eigenvalues, a rank other than `r`, or atoms that fail to
        reproduce the input matrix to `check_tol`.
    """
    A = np.asarray(getattr(M_flat, "values", M_flat), dtype=float)
    basis = getattr(M_flat, "basis", None)
    if basis is None:
        if d is None:
            raise InvalidInputError("pass d when M_flat carries no basis")
        degree = 0
        while basis_size(d, degree) < A.shape[0]:
            degree += 1
        if basis_size(d, degree) != A.shape[0]:
            raise InvalidInputError(f"size {A.shape[0]} is not a basis size for d={d}")
        basis = enumerate_basis(d, degree)
    else:
        d = len(basis[0])
        degree = getattr(M_flat, "q", None)
        if degree is None:
            degree = max(sum(b) for b in basis)
    q = degree - 1 if q is None else int(q)
    if not 0 <= q < degree:
        raise InvalidInputError(f"need 0 <= q < {degree}, got q={q}")
    block = basis_size(d, q)

    scale = float(np.trace(A))
    top = float(A.diagonal().max(initial=0.0))
    if r is None:
        factors = pivoted_cholesky_flat(A, rtol * scale, block, min_pivot=rtol * top)
    elif r > block:
        raise FlatnessError(f"r={r} atoms exceed the {block} monomials of degree <= {q}")
    else:
        # a known atom count fixes the rank, so small trailing pivots are kept
        # down to rounding level
        noise = 64 * np.finfo(float).eps * top
        try:
            factors = pivoted_cholesky_flat(A, rtol * scale, block, min_pivot=noise, rank=r)
        except FlatnessError as exc:
            raise ExtractionError(f"moment matrix is not of rank r={r}: {exc}") from exc
        if factors.rank != r:
            raise ExtractionError(f"numerical rank {factors.rank} differs from the requested r={r}")
    rank = factors.rank
    echelon = echelon_form(factors.L, factors.pivots, basis)
    mult = multiplication_matrices(echelon, d, degree)

    rng = np.random.default_rng(seed)
    rho = rng.uniform(size=d)
    rho /= rho.sum()
    N = sum(c * Ni for c, Ni in zip(rho, mult.matrices))
    T, Z = schur(N, output="real")
    eig = np.linalg.eigvals(T) if rank > 1 else np.diag(T).astype(complex)
    if np.abs(eig.imag).max(initial=0.0) > imag_tol * max(1.0, np.abs(eig).max(initial=0.0)):
        raise ExtractionError("multiplication matrix has complex eigenvalues; input is not flat")
    order = np.argsort(np.diag(T), kind="stable")
    Z = Z[:, order]
    points = np.column_stack([np.einsum("ij,ik,kj->j", Z, Ni, Z) for Ni in mult.matrices])

    V = vandermonde(points, degree)
    res = admm_weights(V, A[:, 0], weight_config)
    err = relative_error(A, V, res.weights)
    if err > check_tol:
        raise ExtractionError(f"extracted atoms reproduce the moment matrix only to {err:.3e}")
    meta = {"rank": rank, "q": q, "degree": degree, "seed": seed, "rho": rho.tolist(),
            "pivots": list(factors.pivots), "relative_error": err, "rtol": rtol}
    return ScenarioSet(points, res.weights, "lasserre", None, meta)


def _sample_pipeline(x, q, select, weight_config, standardized, chol_rtol, source, extra):
    emb, _ = sample_embedding(x, 2 * q, standardized=standardized, chol_rtol=chol_rtol)
    ind, info = select(emb)
    if ind.size == 0:
        raise ExtractionError(f"{source} selected no scenarios")
    cfg = weight_config or AdmmConfig()
    res = retrieve_weights(x, ind, q, cfg)
    meta = {"q": q, "embedding_rank": emb.rank, "standardized": standardized,
            "chol_rtol": chol_rtol, "admm": cfg.as_dict(), "admm_objective": res.objective,
            "admm_converged": res.converged, "admm_polished": res.polished, **extra, **info}
    return ScenarioSet(x[ind], res.weights, source, ind, meta)


def extract_maxvol(panel, q: int, k: int | None = None,
                   weight_config: AdmmConfig | None = None, *, standardized: bool = True,
                   chol_rtol: float = 1e-13) -> ScenarioSet:
    """Maximum-volume rows of the orthonormal embedding, then simplex weights."""
    x = as_panel(panel)

    def select(emb: OrthonormalEmbedding):
        kk = emb.rank if k is None else min(int(k), emb.rank)
        return maxvol_select(emb.Q, kk), {"k": kk}

    return _sample_pipeline(x, q, select, weight_config, standardized, chol_rtol, "maxvol", {})


def extract_ghtp(panel, q: int, tolerance: float = 1e-10, max_iter: int | None = None,
                 weight_config: AdmmConfig | None = None, *, standardized: bool = True,
                 chol_rtol: float = 1e-13) -> ScenarioSet:
    """Graded hard thresholding on (Q^T, y_tilde), then simplex weights on its support."""
    x = as_panel(panel)

    def select(emb: OrthonormalEmbedding):
        cap = emb.rank if max_iter is None else int(max_iter)
        res = ghtp_select(emb.Q.T, emb.y_tilde, tolerance, cap)
        return res.indices, {"ghtp_iterations": len(res.support_sizes),
                             "ghtp_residual": res.residual_norms[-1],
                             "ghtp_rank_deficient": res.rank_deficient}

    return _sample_pipeline(x, q, select, weight_config, standardized, chol_rtol, "ghtp",
                            {"tolerance": tolerance})


def extract_lasserre(panel, q: int, seed: int = 0, **kwargs) -> ScenarioSet:
    """Atom extraction from the degree-(q+1) empirical moment matrix of a panel.

    Succeeds only when that matrix is a flat extension, i.e. the panel has
    at most m_q distinct points in general position.
    """
    return lasserre_extract(moment_matrix(as_panel(panel), q + 1), q, seed=seed, **kwargs)
