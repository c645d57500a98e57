import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import direct_moments
from empscen.bench import GmmSpec, gen_gmm
from empscen.errors import InvalidInputError, NormalizationError, NotPSDError
from empscen.extractors import (
    ScenarioSet,
    covariance_scenarios,
    extract_scenarios,
    matrix_root,
    omp_select,
    sample_embedding,
)
from empscen.moments import basis_size, moment_matrix, relative_error, vandermonde


def scenario_error(x, q, scen):
    return relative_error(moment_matrix(x, q), vandermonde(scen.points, q), scen.weights)


def sorted_points(scen):
    return np.sort(scen.points[:, 0])


def test_covariance_scenarios_of_two_point_panel():
    scen = covariance_scenarios(np.eye(2))
    np.testing.assert_allclose(sorted_points(scen), [-1, 1], atol=1e-15)
    np.testing.assert_array_equal(scen.weights, [0.5, 0.5])
    assert scen.source == "covariance" and scen.selected_indices is None


def test_covariance_scenarios_of_point_mass():
    mu = -2.5
    scen = covariance_scenarios([[1.0, mu], [mu, mu * mu]])
    assert len(scen) == 1
    assert scen.points[0, 0] == pytest.approx(mu)
    assert scen.weights[0] == 1.0


def test_covariance_scenarios_bordered_correlation_matrix(rng):
    d = 100
    G = rng.normal(size=(d, d + 5))
    C = G @ G.T / (d + 5)
    mean = rng.uniform(-50, 50, d)
    M = np.block([[np.ones((1, 1)), mean[None]], [mean[:, None], C + np.outer(mean, mean)]])
    scen = covariance_scenarios(M)
    assert len(scen) == d + 1
    V = vandermonde(scen.points, 1).values
    assert relative_error(M, V, scen.weights) <= 1e-12
    assert np.all(scen.weights == 1.0 / (d + 1))


def test_covariance_scenarios_input_errors():
    with pytest.raises(NormalizationError):
        covariance_scenarios(np.diag([2.0, 1.0]))
    with pytest.raises(NotPSDError):
        covariance_scenarios([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidInputError):
        covariance_scenarios(moment_matrix([0.0, 1.0], 2))


@given(st.integers(1, 20), st.integers(1, 5000), st.integers(0, 2**32 - 1))
def test_covariance_reconstruction_is_exact(d, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + rng.uniform(-50, 50, d)
    M = moment_matrix(x, 1)
    scen = covariance_scenarios(M)
    assert len(scen) <= min(n, d + 1)
    assert len(scen) == np.linalg.matrix_rank(M.values, tol=1e-12 * np.linalg.norm(M.values))
    assert np.all(scen.weights == 1.0 / len(scen))
    assert relative_error(M, vandermonde(scen.points, 1), scen.weights) <= 1e-12


def test_matrix_root_examples():
    np.testing.assert_array_equal(matrix_root(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(matrix_root([[4.0, 2.0], [2.0, 1.0]])[:, 0], [2, 1])
    padded = np.zeros((4, 4))
    padded[:2, :2] = [[2.0, 1.0], [1.0, 2.0]]
    R = matrix_root(padded)
    assert R.shape == (4, 2)
    np.testing.assert_allclose(R @ R.T, padded, atol=1e-14)


def test_omp_selects_all_three_univariate_points():
    emb, _ = sample_embedding([-1.0, 0.0, 1.0], 2)
    ind, trace, factors = omp_select(emb, 1e-12)
    assert sorted(ind) == [0, 1, 2]
    assert trace.rank_exhausted
    np.testing.assert_allclose(factors.B.T @ factors.L, np.eye(3), atol=1e-10)


def test_omp_first_pivot_is_lowest_index():
    emb, _ = sample_embedding(np.random.default_rng(3).normal(size=(40, 2)), 2)
    ind, trace, _ = omp_select(emb, 1e-12)
    assert ind[0] == 0 and trace.pivot_sequence[0] == 0


def test_omp_on_identical_points_stops_after_one_step():
    emb, _ = sample_embedding(np.full((6, 2), 4.0), 2)
    ind, trace, _ = omp_select(emb, 1e-12)
    assert len(ind) == 1
    assert trace.residual_norms[-1] <= 1e-12


def test_omp_argument_checks():
    emb, _ = sample_embedding([-1.0, 0.0, 1.0], 2)
    with pytest.raises(InvalidInputError):
        omp_select(emb, 0.0)


@given(st.integers(3, 150), st.integers(1, 3), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_omp_trace_properties(n, d, q, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d)) * 4 + rng.uniform(-20, 20, d)
    emb, _ = sample_embedding(x, 2 * q)
    ind, trace, factors = omp_select(emb, 1e-12)
    assert len(set(ind)) == len(ind) <= emb.rank <= basis_size(d, 2 * q)
    res = trace.residual_norms
    assert all(b <= a + 1e-12 for a, b in zip(res, res[1:]))
    np.testing.assert_allclose(factors.B.T @ factors.L, np.eye(len(ind)), atol=1e-8)


def test_extraction_examples():
    scen, _ = extract_scenarios([-1.0, 0.0, 1.0], 1, 1e-12)
    assert sorted(scen.selected_indices) == [0, 1, 2]
    np.testing.assert_allclose(scen.weights, np.full(3, 1 / 3), atol=1e-10)

    scen, _ = extract_scenarios(np.full((5, 1), 2.5), 1)
    assert len(scen) == 1 and scen.points[0, 0] == 2.5 and scen.weights[0] == 1.0

    scen, _ = extract_scenarios([-1.0, 1.0], 1)
    np.testing.assert_allclose(scen.weights, [0.5, 0.5], atol=1e-10)
    np.testing.assert_allclose(sorted_points(scen), [-1, 1])


def test_extraction_points_are_panel_rows(rng):
    x = rng.normal(size=(200, 3))
    scen, _ = extract_scenarios(x, 1)
    np.testing.assert_array_equal(scen.points, x[scen.selected_indices])
    full = scen.full_weights(len(x))
    assert full.sum() == pytest.approx(1.0)
    assert scen.metadata["admm"]["rho"] == 1.0


def atom_panel(rng, d, q):
    """Panel of r distinct atoms repeated with random multiplicities."""
    r = rng.integers(1, basis_size(d, q) + 1)
    atoms = rng.uniform(-3, 3, size=(r, d))
    counts = rng.integers(1, 8, size=r)
    return np.repeat(atoms, counts, axis=0)


@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_quadrature_exactness_at_rank_exhaustion(d, q, seed):
    rng = np.random.default_rng(seed)
    x = rng.permutation(atom_panel(rng, d, q))
    scen, trace = extract_scenarios(x, q, 1e-12)
    assert trace.rank_exhausted or trace.residual_norms[-1] <= 1e-12
    exact = direct_moments(x, 2 * q)
    got = direct_moments(scen.points, 2 * q, scen.weights)
    assert np.all(np.abs(got - exact) <= 1e-8 * np.maximum(1.0, np.abs(exact)))


def test_omp_accuracy_on_mixture_panel():
    x = gen_gmm(GmmSpec(10, 5, "random_pd", "random", 10_000, seed=11))
    scen, _ = extract_scenarios(x, 1)
    assert scenario_error(x, 1, scen) <= 1e-2
    assert len(scen) <= basis_size(10, 2)


def test_scenario_set_validation():
    with pytest.raises(InvalidInputError):
        ScenarioSet([[0.0]], [0.5], "omp")
    with pytest.raises(InvalidInputError):
        ScenarioSet([[0.0], [1.0]], [1.5, -0.5], "omp")
    with pytest.raises(InvalidInputError):
        ScenarioSet([[np.inf]], [1.0], "omp")
    with pytest.raises(InvalidInputError):
        ScenarioSet([[0.0]], [1.0], "unknown")
    with pytest.raises(InvalidInputError):
        ScenarioSet([[0.0]], [1.0], "covariance").full_weights(3)
    scen = ScenarioSet([[0.0], [2.0]], [0.5, 0.5], "lasserre")
    np.testing.assert_allclose(scen.moments(2), [1, 1, 2])
