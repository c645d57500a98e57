import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from empscen.errors import FlatnessError, InvalidInputError, NotPSDError
from empscen.extractors import sample_embedding
from empscen.factorization import orthonormal_embed, pivoted_cholesky, pivoted_cholesky_flat
from empscen.moments import empirical_moments, moment_matrix, vandermonde


def schur_complement_oracle(M, tolerance):
    """Textbook pivoted Cholesky on explicit Schur complements."""
    S = np.array(M, dtype=float)
    cols, pivots = [], []
    while np.trace(S) > tolerance and len(pivots) < len(S):
        j = int(np.argmax(np.diag(S)))
        col = S[:, j] / np.sqrt(S[j, j])
        cols.append(col)
        pivots.append(j)
        S = S - np.outer(col, col)
    return np.column_stack(cols) if cols else np.zeros((len(S), 0)), pivots


def random_psd(rng, m, rank):
    G = rng.normal(size=(m, rank))
    return G @ G.T


def test_identity_factorization():
    f = pivoted_cholesky(np.eye(3), 0.0)
    assert f.pivots == [0, 1, 2]
    np.testing.assert_array_equal(f.L, np.eye(3))
    np.testing.assert_array_equal(f.B, np.eye(3))


def test_rank_one_hand_example():
    f = pivoted_cholesky([[4.0, 2.0], [2.0, 1.0]], 1e-12)
    assert f.pivots == [0] and f.rank == 1
    np.testing.assert_allclose(f.L[:, 0], [2, 1])
    np.testing.assert_allclose(f.B[:, 0], [0.5, 0])


def test_two_atom_moment_matrix_has_two_pivots():
    f = pivoted_cholesky(moment_matrix([0.0, 1.0], 2), 1e-12)
    assert f.rank == 2


def test_negative_pivot_is_rejected():
    with pytest.raises(NotPSDError):
        pivoted_cholesky(np.diag([1.0, -1.0]), 0.0)
    with pytest.raises(InvalidInputError):
        pivoted_cholesky(np.ones((2, 3)), 0.0)


def test_zero_pivot_flag_and_warning():
    with pytest.warns(RuntimeWarning):
        f = pivoted_cholesky(np.diag([1.0, 1e-20]), 0.0, min_pivot=1e-15)
    assert f.zero_pivot and f.rank == 1


@given(st.integers(2, 8), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_factor_invariants_against_oracle(m, rank, seed):
    rng = np.random.default_rng(seed)
    rank = min(rank, m)
    M = random_psd(rng, m, rank)
    tol = 1e-10 * np.trace(M)
    f = pivoted_cholesky(M, tol)
    L_ref, piv_ref = schur_complement_oracle(M, tol)
    assert f.pivots == piv_ref
    assert len(set(f.pivots)) == f.rank
    np.testing.assert_allclose(f.L, L_ref, atol=1e-8 * np.abs(M).max())
    np.testing.assert_allclose(f.B.T @ f.L, np.eye(f.rank), atol=1e-10)
    assert all(b <= a + 1e-12 * a for a, b in zip(f.err_history, f.err_history[1:]))
    residual = M - f.L @ f.L.T
    assert np.trace(residual) <= tol + 1e-12
    assert f.residual_trace <= tol
    assert np.linalg.norm(residual) <= np.sqrt(m) * tol + 1e-12


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_biorthogonal_basis_is_a_generalized_inverse(rank, seed):
    """B B^T inverts M on its range (M G M = M, G M G = G); exact inverse at full rank."""
    rng = np.random.default_rng(seed)
    M = random_psd(rng, 5, rank)
    f = pivoted_cholesky(M, 1e-12 * np.trace(M))
    G = f.B @ f.B.T
    scale = np.abs(M).max()
    np.testing.assert_allclose(M @ G @ M, M, atol=1e-8 * scale)
    np.testing.assert_allclose(G @ M @ G, G, atol=1e-8 * np.abs(G).max())
    if rank == 5:
        np.testing.assert_allclose(G, np.linalg.inv(M), rtol=1e-6, atol=1e-8 * np.abs(G).max())


def test_generalized_inverse_differs_from_pseudoinverse_when_singular():
    M = np.array([[2.0, 1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]])   # rank 2
    f = pivoted_cholesky(M, 1e-12)
    w, U = np.linalg.eigh(M)
    keep = w > 1e-10
    pinv = (U[:, keep] / w[keep]) @ U[:, keep].T
    G = f.B @ f.B.T
    np.testing.assert_allclose(M @ G @ M, M, atol=1e-12)
    assert np.abs(G - pinv).max() > 1e-3
    # both act identically on the range of M
    np.testing.assert_allclose(M @ G @ M, M @ pinv @ M, atol=1e-12)


def test_flat_variant_hand_example():
    M = moment_matrix([0.0, 1.0], 2)
    f = pivoted_cholesky_flat(M, 1e-12, block=2)
    assert f.pivots == [0, 1]
    np.testing.assert_allclose(f.L, [[1, 0], [.5, .5], [.5, .5]], atol=1e-15)


def test_flat_variant_with_full_block_matches_unrestricted():
    a = pivoted_cholesky_flat(np.eye(2), 0.0, block=2)
    b = pivoted_cholesky(np.eye(2), 0.0)
    assert a.pivots == b.pivots
    np.testing.assert_array_equal(a.L, b.L)


def test_flat_variant_rank_one():
    mu = 0.7
    v = np.array([1.0, mu, mu * mu])
    f = pivoted_cholesky_flat(np.outer(v, v), 1e-12, block=2)
    assert f.pivots == [0]


def test_flat_variant_with_fixed_rank_keeps_small_pivots():
    M = np.diag([1.0, 1e-12, 0.0])
    loose = pivoted_cholesky_flat(M, 1e-6, 3)
    assert loose.pivots == [0]
    fixed = pivoted_cholesky_flat(M, 1e-6, 3, rank=2)
    assert fixed.pivots == [0, 1] and fixed.residual_trace == 0.0
    with pytest.raises(FlatnessError):
        pivoted_cholesky_flat(np.eye(3), 0.5, 3, rank=2)


def test_flat_variant_reports_non_flat_input():
    with pytest.raises(FlatnessError):
        pivoted_cholesky_flat(np.diag([1.0, 0.0, 1.0]), 1e-12, block=2)
    # a three-point measure needs a degree-two pivot
    with pytest.raises(FlatnessError):
        pivoted_cholesky_flat(moment_matrix([-1.0, 0.0, 1.0], 2), 1e-10, block=2)


def test_embedding_of_two_point_panel():
    x = np.array([-1.0, 1.0])
    y = empirical_moments(x, 2)
    V = vandermonde(x, 2)
    f = pivoted_cholesky(moment_matrix(x, 2), 1e-12)
    emb = orthonormal_embed(V, f, y)
    assert emb.Q.shape == (2, 2)
    np.testing.assert_allclose(emb.Q.T @ emb.Q, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(emb.Q @ emb.y_tilde, [0.5, 0.5], atol=1e-12)


def test_embedding_of_single_sample():
    x = np.array([[0.3]])
    f = pivoted_cholesky(moment_matrix(x, 1), 1e-14)
    emb = orthonormal_embed(vandermonde(x, 1), f, empirical_moments(x, 1))
    assert emb.Q.shape == (1, 1)
    assert abs(emb.Q[0, 0]) == pytest.approx(1.0)
    assert emb.Q[0, 0] * emb.y_tilde[0] == pytest.approx(1.0)


def test_embedding_rejects_mismatched_shapes():
    f = pivoted_cholesky(np.eye(3), 0.0)
    with pytest.raises(InvalidInputError):
        orthonormal_embed(np.ones((4, 2)), f, np.ones(3))


@given(st.integers(1, 200), st.integers(1, 4), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_constant_reproduction_identity(n, d, q, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * rng.uniform(0.5, 3, d) + rng.uniform(-5, 5, d)
    emb, _ = sample_embedding(x, 2 * q)
    np.testing.assert_allclose(emb.Q.T @ emb.Q, np.eye(emb.rank), atol=1e-8)
    np.testing.assert_allclose(emb.Q @ emb.y_tilde, np.full(n, 1.0 / n), atol=1e-8)


def test_raw_embedding_matches_unstandardized_formula(rng):
    x = rng.normal(size=(50, 2))
    V = vandermonde(x, 2)
    y = empirical_moments(x, 2)
    f = pivoted_cholesky(V.values.T @ V.values / 50, 1e-13)
    emb = orthonormal_embed(V, f, y)
    np.testing.assert_allclose(emb.Q, V.values @ f.B / np.sqrt(50))
    np.testing.assert_allclose(emb.y_tilde, f.B.T @ y.values / np.sqrt(50))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        np.testing.assert_allclose(emb.Q @ emb.y_tilde, np.full(50, 1 / 50), atol=1e-10)
