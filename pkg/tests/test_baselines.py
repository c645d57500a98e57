import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st
from scipy.linalg import qr
from scipy.optimize import linear_sum_assignment

from empscen.baselines import (
    basis_pursuit_constant,
    basis_pursuit_solve,
    echelon_form,
    extract_ghtp,
    extract_lasserre,
    extract_maxvol,
    ghtp_select,
    lasserre_extract,
    maxvol_select,
    multiplication_matrices,
)
from empscen.errors import ExtractionError, FlatnessError, InvalidInputError, ScenarioError
from empscen.extractors import sample_embedding
from empscen.factorization import pivoted_cholesky_flat
from empscen.moments import (
    basis_size,
    enumerate_basis,
    moment_matrix,
    relative_error,
    vandermonde,
    weighted_moment_matrix,
)
from helpers_atoms import atom_weights, separated_atoms


def random_orthonormal(rng, n, r):
    return np.linalg.qr(rng.normal(size=(n, r)))[0]


def match_distance(found, truth):
    cost = np.linalg.norm(found[:, None] - truth[None], axis=2)
    i, j = linear_sum_assignment(cost)
    return cost[i, j].max()


def test_maxvol_identity_keeps_order():
    np.testing.assert_array_equal(maxvol_select(np.eye(5)), np.arange(5))


def test_maxvol_hand_downdate():
    Q = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    np.testing.assert_array_equal(maxvol_select(Q, 2), [1, 0])


def test_maxvol_rejects_bad_k():
    with pytest.raises(InvalidInputError):
        maxvol_select(np.eye(3), 4)
    with pytest.raises(InvalidInputError):
        maxvol_select(np.eye(3), 0)


@given(st.integers(2, 200), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_maxvol_equals_column_pivoted_qr(n, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, n - 1)
    Q = random_orthonormal(rng, n, r)
    _, _, piv = qr(Q.T, pivoting=True, mode="economic")
    np.testing.assert_array_equal(maxvol_select(Q, r), piv[:r])


def test_ghtp_identity_operator():
    res = ghtp_select(np.eye(4), [0.0, 3.0, 0.0, 1.0], 1e-12)
    assert res.support_sizes == [1, 2]
    assert set(res.indices) == {1, 3}
    np.testing.assert_allclose(res.x, [0, 3, 0, 1])


def test_ghtp_zero_target():
    res = ghtp_select(np.eye(3), np.zeros(3))
    assert res.indices.size == 0 and not res.x.any() and res.support_sizes == []


def test_ghtp_on_three_point_embedding():
    emb, _ = sample_embedding([-1.0, 0.0, 1.0], 2)
    res = ghtp_select(emb.Q.T, emb.y_tilde, 1e-10)
    assert sorted(res.indices) == [0, 1, 2]
    assert res.residual_norms[-1] <= 1e-10


@given(st.integers(5, 60), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_ghtp_support_grows_with_iterations(n, d, seed):
    rng = np.random.default_rng(seed)
    emb, _ = sample_embedding(rng.normal(size=(n, d)), 2)
    res = ghtp_select(emb.Q.T, emb.y_tilde)
    assert res.support_sizes == list(range(1, len(res.support_sizes) + 1))
    assert len(res.support_sizes) <= emb.rank


def four_point_embedding():
    emb, _ = sample_embedding([-1.0, -0.5, 0.5, 1.0], 2)
    return emb


def test_basis_pursuit_closed_form_examples():
    emb = four_point_embedding()
    res = basis_pursuit_solve(emb.Q, emb.y_tilde, 0.1)
    assert res.converged
    np.testing.assert_allclose(res.weights, 0.15, atol=1e-9)
    np.testing.assert_allclose(basis_pursuit_solve(emb.Q, emb.y_tilde, 0.3).weights, 0, atol=1e-12)
    small = basis_pursuit_solve(emb.Q, emb.y_tilde, 1e-9)
    np.testing.assert_allclose(small.weights, 0.25, atol=1e-8)
    assert basis_pursuit_constant(4, 0.1) == pytest.approx(0.15)
    assert basis_pursuit_constant(4, 0.3) == 0.0
    with pytest.raises(InvalidInputError):
        basis_pursuit_solve(emb.Q, emb.y_tilde, 0.0)


@given(st.sampled_from([4, 50, 200]), st.sampled_from([0.5, 0.9, 1.0, 2.0]),
       st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_basis_pursuit_constant_minimizer(n, factor, d, seed):
    rng = np.random.default_rng(seed)
    emb, _ = sample_embedding(rng.normal(size=(n, d)), 2)
    lam = factor / n
    res = basis_pursuit_solve(emb.Q, emb.y_tilde, lam)
    assert np.abs(res.weights - basis_pursuit_constant(n, lam)).max() <= 1e-6


def test_echelon_leading_block_is_identity(rng):
    atoms = separated_atoms(rng, 4, 2)
    M = weighted_moment_matrix(atoms, atom_weights(rng, 4), 3)
    f = pivoted_cholesky_flat(M, 1e-10 * np.trace(M.values), basis_size(2, 2))
    ech = echelon_form(f.L, f.pivots, M.basis)
    np.testing.assert_array_equal(ech.L_tilde[f.pivots], np.eye(f.rank))
    np.testing.assert_allclose(ech.L_tilde @ ech.L_tilde[f.pivots].T, ech.L_tilde, atol=1e-12)


def test_lasserre_two_atoms_by_hand():
    M = weighted_moment_matrix([[0.0], [1.0]], [0.5, 0.5], 2)
    f = pivoted_cholesky_flat(M, 1e-12, 2)
    ech = echelon_form(f.L, f.pivots, M.basis)
    mult = multiplication_matrices(ech, 1, 2)
    np.testing.assert_allclose(mult.matrices[0], [[0, 1], [0, 1]], atol=1e-14)
    scen = lasserre_extract(M, 1, 2)
    np.testing.assert_allclose(scen.points[:, 0], [0, 1], atol=1e-12)
    np.testing.assert_allclose(scen.weights, [0.5, 0.5], atol=1e-10)
    assert scen.source == "lasserre"


def test_lasserre_point_mass():
    mu = 0.37
    M = weighted_moment_matrix([[mu]], [1.0], 2)
    scen = lasserre_extract(M, 1)
    assert len(scen) == 1 and scen.points[0, 0] == pytest.approx(mu, abs=1e-12)


def test_lasserre_three_planar_atoms():
    atoms = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    M = weighted_moment_matrix(atoms, np.full(3, 1 / 3), 2)
    scen = lasserre_extract(M, 1, 3, seed=5)
    assert match_distance(scen.points, atoms) <= 1e-8


def test_lasserre_accepts_bare_arrays_with_dimension():
    atoms = np.array([[0.2, -0.4], [0.7, 0.1]])
    M = weighted_moment_matrix(atoms, [0.3, 0.7], 2)
    scen = lasserre_extract(M.values, d=2)
    assert match_distance(scen.points, atoms) <= 1e-8
    with pytest.raises(InvalidInputError):
        lasserre_extract(M.values)


@given(st.integers(1, 3), st.integers(1, 10), st.integers(0, 2**32 - 1))
@example(d=1, r=9, seed=16007643)  # ninth pivot is 4e-11 of the trace
def test_lasserre_recovers_separated_atoms(d, r, seed):
    rng = np.random.default_rng(seed)
    q = next(k for k in range(10) if basis_size(d, k) >= r)
    atoms = separated_atoms(rng, r, d)
    w = atom_weights(rng, r)
    M = weighted_moment_matrix(atoms, w, q + 1)
    scen = lasserre_extract(M, q, r, seed=seed)
    assert match_distance(scen.points, atoms) <= 1e-6
    assert relative_error(M, vandermonde(scen.points, q + 1), scen.weights) <= 1e-8


def test_lasserre_fails_loudly_on_non_flat_input(rng):
    # three atoms on the line but only the degree-one block for pivots
    with pytest.raises(FlatnessError):
        lasserre_extract(weighted_moment_matrix([[0.0], [0.5], [1.0]], np.full(3, 1 / 3), 2), 1)
    # generic full-rank matrix is not a moment matrix of a few atoms
    G = rng.normal(size=(6, 6))
    with pytest.raises(ScenarioError):
        lasserre_extract(G @ G.T + np.eye(6), d=2)
    # rank differs from the requested count
    with pytest.raises(ExtractionError):
        lasserre_extract(weighted_moment_matrix([[0.0], [1.0]], [0.5, 0.5], 2), 1, 1)
    # a sample panel with many distinct points is not flat
    with pytest.raises(ScenarioError):
        extract_lasserre(rng.normal(size=(50, 2)), 1)


def test_sample_baselines_end_to_end(rng):
    x = rng.normal(size=(300, 2)) * [2, 1] + [10, -3]
    for scen in (extract_maxvol(x, 1), extract_ghtp(x, 1)):
        assert len(scen) <= basis_size(2, 2)
        np.testing.assert_array_equal(scen.points, x[scen.selected_indices])
        err = relative_error(moment_matrix(x, 1), vandermonde(scen.points, 1), scen.weights)
        assert err < 1e-1
    atoms = separated_atoms(rng, 3, 2)
    panel = np.repeat(atoms, [3, 5, 7], axis=0)
    scen = extract_lasserre(panel, 1)
    assert match_distance(scen.points, atoms) <= 1e-6
    np.testing.assert_allclose(np.sort(scen.weights), np.array([3, 5, 7]) / 15, atol=1e-8)
    assert enumerate_basis(2, 1) == ((0, 0), (1, 0), (0, 1))


def test_maxvol_square_orthogonal_ties_resolve_to_lowest_index(rng):
    # every row of a square orthogonal matrix keeps norm one under down-dating
    Q = random_orthonormal(rng, 7, 7)
    np.testing.assert_array_equal(maxvol_select(Q), np.arange(7))
