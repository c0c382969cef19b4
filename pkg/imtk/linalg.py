"""Dense real/complex matrix services shared by every other module.

Tolerances are relative to the matrix norm with an absolute floor of 1e-14.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as linalg

from imtk.errors import DimensionError, NoConvergence, SingularMatrix

ABS_FLOOR = 1e-14


def as_matrix(M, dtype=float) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(M, dtype=dtype))
    if arr.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("matrix has non-finite entries")
    return arr


def solve_linear(M, rhs) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M))
    rhs = np.asarray(rhs)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"solve_linear needs a square matrix, got {M.shape}")
    scale = max(np.linalg.norm(M, ord=np.inf), ABS_FLOOR)
    lu, piv = linalg.lu_factor(M, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() < 1e-14 * scale:
        raise SingularMatrix(
            f"pivot {pivots.min():.3e} below 1e-14*||M|| = {1e-14 * scale:.3e}"
        )
    return linalg.lu_solve((lu, piv), rhs)


def operator_norm2(M) -> float:
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return 0.0
    return float(linalg.svdvals(M)[0])


@dataclass(frozen=True)
class SymmetricEigen:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def symmetric_eigen(M) -> SymmetricEigen:
    M = as_matrix(M)
    sym = 0.5 * (M + M.T)
    w, Q = linalg.eigh(sym)
    return SymmetricEigen(eigenvalues=w, eigenvectors=Q)


@dataclass(frozen=True)
class GeneralEigen:
    """Eigenvalues of a real matrix plus access to its real invariant subspaces."""

    eigenvalues: np.ndarray
    matrix: np.ndarray

    def invariant_subspace(self, select: Callable[[complex], bool]) -> np.ndarray:
        """Orthonormal basis of the real invariant subspace for the selected eigenvalues.

        The selection must be closed under conjugation; it is computed from an
        ordered real Schur form, not from eigenvectors.
        """
        return invariant_subspace(self.matrix, select)


def eig_general(M) -> GeneralEigen:
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"eig_general needs a square matrix, got {M.shape}")
    try:
        w = linalg.eigvals(M)
    except linalg.LinAlgError as e:
        raise NoConvergence(f"eigenvalue iteration failed: {e}") from e
    order = np.lexsort((w.imag, w.real))
    return GeneralEigen(eigenvalues=w[order], matrix=M)


def invariant_subspace(M, select: Callable[[complex], bool]) -> np.ndarray:
    M = as_matrix(M)
    n = M.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    try:
        _, Z, sdim = linalg.schur(
            M, output="real", sort=lambda re, im: bool(select(complex(re, im)))
        )
    except linalg.LinAlgError as e:
        raise NoConvergence(f"ordered Schur failed: {e}") from e
    return Z[:, :sdim]


def orthonormalize(S) -> np.ndarray:
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[1] == 0:
        return S
    Q, _ = np.linalg.qr(S)
    return Q


def principal_angle(S1, S2) -> float:
    """Largest principal angle between the column spaces of S1 and S2."""
    if S1.shape[1] == 0 and S2.shape[1] == 0:
        return 0.0
    return float(np.max(linalg.subspace_angles(S1, S2)))


