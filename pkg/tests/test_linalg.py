import numpy as np
import pytest

from imtk.errors import DimensionError, SingularMatrix
from imtk.linalg import (
    eig_general,
    invariant_subspace,
    operator_norm2,
    principal_angle,
    solve_linear,
    symmetric_eigen,
)


def test_solve_identity_returns_rhs():
    rhs = np.arange(6.0).reshape(3, 2)
    assert np.allclose(solve_linear(np.eye(3), rhs), rhs)


def test_solve_diagonal_inverse():
    assert np.allclose(solve_linear(np.diag([2.0, 4.0]), np.eye(2)), np.diag([0.5, 0.25]))


def test_solve_recovers_known_solution():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(5, 5)) + 5.0 * np.eye(5)
    X0 = rng.normal(size=(5, 3))
    assert np.allclose(solve_linear(M, M @ X0), X0, atol=1e-9)


def test_solve_complex_system():
    M = np.array([[1.0 + 1.0j, 0.0], [0.0, 2.0]])
    assert np.allclose(solve_linear(M, np.ones(2)), [0.5 - 0.5j, 0.5])


def test_solve_singular_raises():
    with pytest.raises(SingularMatrix):
        solve_linear(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_solve_rejects_rectangular():
    with pytest.raises(DimensionError):
        solve_linear(np.ones((2, 3)), np.ones(2))


@pytest.mark.parametrize(
    "M, expected",
    [
        (np.zeros((3, 3)), 0.0),
        (np.diag([3.0, -1.0]), 3.0),
        (np.array([[0.0, 1.0], [0.0, 0.0]]), 1.0),
    ],
)
def test_operator_norm2(M, expected):
    assert operator_norm2(M) == pytest.approx(expected, abs=1e-12)


def test_symmetric_eigen_reconstructs():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4, 4))
    M = X + X.T
    eig = symmetric_eigen(M)
    assert np.all(np.diff(eig.eigenvalues) >= 0)
    assert np.linalg.norm(eig.reconstruct() - M) <= 1e-10 * np.linalg.norm(M)
    assert np.allclose(eig.eigenvectors.T @ eig.eigenvectors, np.eye(4), atol=1e-10)


def test_eig_general_counts_and_subspace():
    M = np.array([[0.0, -2.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, -3.0]])
    eig = eig_general(M)
    assert np.allclose(np.sort(eig.eigenvalues.real), [-3.0, 0.0, 0.0])
    S = eig.invariant_subspace(lambda lam: lam.real > -1.0)
    assert S.shape == (3, 2)
    assert principal_angle(S, np.eye(3)[:, :2]) < 1e-10


def test_invariant_subspace_of_diagonal():
    S = invariant_subspace(np.diag([1.0, -3.0]), lambda lam: lam.real < 0)
    assert S.shape == (2, 1)
    assert abs(abs(S[1, 0]) - 1.0) < 1e-12


def test_eig_general_rejects_rectangular():
    with pytest.raises(DimensionError):
        eig_general(np.ones((2, 3)))
