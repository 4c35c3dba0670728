import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import care_oracle
from mindlin_ph.numerics import (
    DichotomyError,
    IndefiniteWeightError,
    NotSkewError,
    StabilizabilityError,
    canonical_skew,
    care_residual,
    eigenvalues,
    skew_block_diagonalize,
    solve_care,
    solve_lqr,
)


def _sorted(z):
    return np.sort_complex(np.asarray(z, dtype=complex))


def test_eigenvalues_rotation_generator():
    lam = eigenvalues(np.array([[0.0, -1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(_sorted(lam), [-1j, 1j], atol=1e-15)


def test_eigenvalues_diagonal():
    np.testing.assert_allclose(_sorted(eigenvalues(np.diag([1.0, 2.0, 3.0]))), [1, 2, 3])


def test_eigenvalues_reject_nonfinite():
    with pytest.raises(ValueError):
        eigenvalues(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_eigenvalues_reject_nonsquare():
    with pytest.raises(ValueError):
        eigenvalues(np.zeros((2, 3)))


def test_open_loop_plate_spectrum_on_imaginary_axis(plate):
    A = plate.A.toarray()
    lam = eigenvalues(A)
    assert np.max(np.abs(lam.real)) <= 1e-8 * np.linalg.norm(A, 2)


def test_skew_canonical_input_unchanged():
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    dec = skew_block_diagonalize(J)
    assert dec.k == 1
    np.testing.assert_allclose(dec.sqrt_alphas, [1.0])
    np.testing.assert_allclose(dec.U.T @ J @ dec.U, J, atol=1e-15)


def test_skew_zero_matrix():
    dec = skew_block_diagonalize(np.zeros((3, 3)))
    assert dec.k == 0
    np.testing.assert_array_equal(dec.D, np.zeros((3, 3)))
    np.testing.assert_allclose(dec.U.T @ dec.U, np.eye(3), atol=1e-15)


def test_skew_rank_deficient_round_trip(rng):
    s = np.array([3.0, 1.5])
    D = canonical_skew(s, 6)
    V, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    J = V @ D @ V.T
    dec = skew_block_diagonalize(J)
    assert dec.k == 2
    np.testing.assert_allclose(dec.sqrt_alphas, s, rtol=1e-12)
    np.testing.assert_array_equal(dec.D[4:, 4:], 0.0)
    assert np.linalg.norm(dec.U.T @ J @ dec.U - dec.D) <= 1e-10
    assert np.linalg.norm(dec.U.T @ dec.U - np.eye(6)) <= 1e-12


def test_skew_repeated_values(rng):
    D = canonical_skew([2.0, 2.0, 2.0], 7)
    V, _ = np.linalg.qr(rng.standard_normal((7, 7)))
    J = V @ D @ V.T
    dec = skew_block_diagonalize(J)
    assert dec.k == 3
    assert np.linalg.norm(dec.U.T @ J @ dec.U - dec.D) <= 1e-12


def test_skew_rejects_nonskew():
    with pytest.raises(NotSkewError):
        skew_block_diagonalize(np.array([[0.0, 1.0], [1.0, 0.0]]))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_skew_decomposition_random(n, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((n, n))
    J = M - M.T
    dec = skew_block_diagonalize(J)
    assert 2 * dec.k <= n
    assert np.linalg.norm(dec.U.T @ J @ dec.U - dec.D) <= 1e-10 * max(1.0, np.linalg.norm(J))
    assert np.all(np.diff(dec.sqrt_alphas) <= 1e-12)


def test_care_scalar_stabilizing_root():
    sol = solve_care(np.array([[-1.0]]), np.array([[1.0]]), np.array([[0.75]]))
    assert sol.X[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert sol.stabilizing
    assert sol.closed_loop_max_real == pytest.approx(-0.5, abs=1e-14)


def test_care_zero_cost_hurwitz(rng):
    A = -np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    A -= (np.max(eigenvalues(A).real) + 0.5) * np.eye(3)
    B = rng.standard_normal((3, 2))
    sol = solve_care(A, -B @ B.T, np.zeros((3, 3)))
    np.testing.assert_allclose(sol.X, 0.0, atol=1e-13)


def test_care_detects_imaginary_axis():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    with pytest.raises(DichotomyError):
        solve_care(A, np.zeros((2, 2)), np.zeros((2, 2)))


@pytest.mark.parametrize("seed", range(10))
def test_care_matches_scipy(seed):
    r = np.random.default_rng(seed)
    n, m = 5, 2
    A = r.standard_normal((n, n))
    B = r.standard_normal((n, m))
    C = r.standard_normal((n, n))
    Q = C.T @ C + np.eye(n)
    sol = solve_care(A, -B @ B.T, Q)
    Xs = la.solve_continuous_are(A, B, Q, np.eye(m))
    assert np.linalg.norm(sol.X - Xs) <= 1e-9 * np.linalg.norm(Xs)
    assert np.linalg.norm(care_residual(A, -B @ B.T, Q, sol.X)) <= 1e-10 * sol.scale


@pytest.mark.parametrize("seed", range(10))
def test_care_matches_hamiltonian_eigenvector_oracle(seed):
    r = np.random.default_rng(100 + seed)
    n = int(r.integers(1, 6))
    A = r.standard_normal((n, n))
    B = r.standard_normal((n, n))
    Q = r.standard_normal((n, n))
    Q = Q @ Q.T + 0.1 * np.eye(n)
    S = -B @ B.T
    sol = solve_care(A, S, Q)
    X = care_oracle(A, S, Q)
    assert np.linalg.norm(sol.X - X) <= 1e-10 * max(1.0, np.linalg.norm(X))


def test_lqr_scalar_integrator():
    K = solve_lqr(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
    assert K[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_lqr_zero_cost_on_stable_plant():
    A = np.array([[-1.0, 2.0], [0.0, -3.0]])
    K = solve_lqr(A, np.array([[0.0], [1.0]]), np.zeros((2, 2)), np.eye(1))
    np.testing.assert_allclose(K, 0.0, atol=1e-14)


def test_lqr_cross_term_matches_scipy(rng):
    n, m = 4, 2
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    N = 0.1 * rng.standard_normal((n, m))
    Q = np.eye(n)
    R = np.eye(m)
    K = solve_lqr(A, B, Q, R, N)
    X = la.solve_continuous_are(A, B, Q, R, s=N)
    np.testing.assert_allclose(K, np.linalg.solve(R, B.T @ X + N.T), rtol=1e-9)


def test_lqr_indefinite_weight():
    with pytest.raises(IndefiniteWeightError):
        solve_lqr(np.zeros((1, 1)), np.ones((1, 1)), -np.ones((1, 1)), np.ones((1, 1)))


def test_lqr_singular_input_weight():
    with pytest.raises(IndefiniteWeightError):
        solve_lqr(np.zeros((1, 1)), np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1)))


def test_lqr_unstabilizable_names_modes():
    A = np.diag([1.0, -2.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(StabilizabilityError) as info:
        solve_lqr(A, B, np.eye(2), np.eye(1))
    assert any(abs(z - 1.0) < 1e-9 for z in info.value.modes)
