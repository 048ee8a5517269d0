"""Dense linear-algebra primitives the rest of kssl builds on.

Everything here is a pure function of its inputs: dense, double
precision, no sparse paths (Gram matrices are dense by nature).  All
rank decisions use a tolerance relative to the largest eigen- or
singular value, RANK_TOL by default.

The Lyapunov solver works in the eigenbasis of K rather than using
Bartels-Stewart, since every K we see is symmetric positive definite.
lyapunov_solve_kron() is a second, independent route through the
n^2-dimensional linear system; it is only practical for small n and
exists so the two can be checked against each other.
"""

import typing

import numpy as np
import scipy.linalg

from . import errors
from . import log


RANK_TOL = 1e-10
SYMMETRY_TOL = 1e-10

# The exponents matrix_power_sym() knows about.
_SUPPORTED_POWERS = (0.5, -0.5, -1.0)


class SymEig(typing.NamedTuple):
    eigenvalues: np.ndarray      # sorted descending
    eigenvectors: np.ndarray     # columns are eigenvectors


class LyapunovSolution(typing.NamedTuple):
    B: np.ndarray
    residual_norm: float         # ||KB + BK^T - RHS||_F


def _as_square(A, name='matrix'):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise errors.DimensionMismatch(
            '%s must be square, got shape %s' % (name, A.shape))
    return A


def asymmetry(A):
    """||A - A^T||_F relative to max(1, ||A||_F)."""
    return (np.linalg.norm(A - A.T) /
            max(1.0, np.linalg.norm(A)))


def is_symmetric(A, tol=SYMMETRY_TOL):
    return asymmetry(A) <= tol


def sym_eig(A, tol=SYMMETRY_TOL):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Raises NonSymmetric if A is not symmetric within tol (relative).
    """
    A = _as_square(A)
    if not is_symmetric(A, tol):
        raise errors.NonSymmetric(
            'Matrix is not symmetric (relative asymmetry %.3g > %.3g)'
            % (asymmetry(A), tol))
    # eigh only reads one triangle; average so both are used.
    (eigenvalues, eigenvectors) = scipy.linalg.eigh(0.5 * (A + A.T))
    return SymEig(eigenvalues[::-1], eigenvectors[:, ::-1])


def check_positive_definite(eigenvalues, rank_tol=RANK_TOL, what='matrix'):
    """Raise SingularMatrix unless min eigenvalue > rank_tol * max."""
    largest = np.max(eigenvalues) if len(eigenvalues) else 0.0
    smallest = np.min(eigenvalues) if len(eigenvalues) else 0.0
    if largest <= 0 or smallest <= rank_tol * largest:
        raise errors.SingularMatrix(
            '%s is not numerically positive definite: eigenvalues in'
            ' [%.3g, %.3g], rank_tol %.3g'
            % (what, smallest, largest, rank_tol))


def matrix_power_sym(A, p, rank_tol=RANK_TOL):
    """U diag(lambda^p) U^T for a symmetric PSD A and p in {1/2, -1/2, -1}.

    Tiny negative eigenvalues (roundoff on a PSD input) are clipped to
    zero for p = 1/2.  Negative powers need a numerically full-rank A.
    """
    if p not in _SUPPORTED_POWERS:
        raise ValueError('Unsupported exponent %r; use one of %s'
                         % (p, _SUPPORTED_POWERS))
    (eigenvalues, U) = sym_eig(A)
    if p < 0:
        check_positive_definite(eigenvalues, rank_tol)
    else:
        eigenvalues = np.clip(eigenvalues, 0.0, None)
    result = (U * eigenvalues ** p) @ U.T
    return 0.5 * (result + result.T)


def matrix_rank(A, rank_tol=RANK_TOL):
    """Number of singular values above rank_tol * sigma_max."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0:
        return 0
    singular_values = scipy.linalg.svdvals(A)
    if singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > rank_tol * singular_values[0]))


def pinv(A, rank_tol=RANK_TOL):
    """Moore-Penrose pseudo-inverse, truncating sigma < rank_tol*sigma_max."""
    A = np.asarray(A, dtype=np.float64)
    if A.size == 0 or not np.any(A):
        return np.zeros(A.shape[::-1])
    return scipy.linalg.pinv(A, atol=0.0, rtol=rank_tol)


def cholesky(A):
    """Lower-triangular L with L L^T = A; SingularMatrix if A isn't PD."""
    A = _as_square(A)
    try:
        return scipy.linalg.cholesky(A, lower=True)
    except np.linalg.LinAlgError as e:
        raise errors.SingularMatrix('Cholesky factorization failed: %s' % e)


def _lyapunov_residual(K, B, rhs):
    return float(np.linalg.norm(K @ B + B @ K.T - rhs))


def lyapunov_solve(K, rhs, rank_tol=RANK_TOL):
    """Solve K B + B K^T = RHS for a symmetric positive definite K.

    We diagonalize K = U diag(lambda) U^T, transform the right-hand
    side into that basis, divide entrywise by lambda_i + lambda_j, and
    transform back.  Raises SingularMatrix if K is not numerically PD.
    """
    K = _as_square(K, 'K')
    rhs = _as_square(rhs, 'RHS')
    if K.shape != rhs.shape:
        raise errors.DimensionMismatch(
            'K is %s but RHS is %s' % (K.shape, rhs.shape))

    (eigenvalues, U) = sym_eig(K)
    check_positive_definite(eigenvalues, rank_tol, 'K')

    rhs_tilde = U.T @ rhs @ U
    b_tilde = rhs_tilde / (eigenvalues[:, None] + eigenvalues[None, :])
    B = U @ b_tilde @ U.T
    if is_symmetric(rhs):
        B = 0.5 * (B + B.T)

    residual = _lyapunov_residual(K, B, rhs)
    log.v2('Lyapunov solve (n=%d): residual %.3g', K.shape[0], residual)
    return LyapunovSolution(B, residual)


def lyapunov_solve_kron(K, rhs):
    """Solve K B + B K^T = RHS as the dense n^2 x n^2 system.

    vec(K B + B K^T) = (I kron K + K kron I) vec(B), with column-major
    vec.  Memory is O(n^4), so keep n small.
    """
    K = _as_square(K, 'K')
    rhs = _as_square(rhs, 'RHS')
    n = K.shape[0]
    identity = np.eye(n)
    system = np.kron(identity, K) + np.kron(K, identity)
    vec_b = scipy.linalg.solve(system, rhs.reshape(-1, order='F'))
    B = vec_b.reshape((n, n), order='F')
    return LyapunovSolution(B, _lyapunov_residual(K, B, rhs))


def centering_matrix(n):
    """H_n = I_n - (1/n) 1 1^T."""
    if n < 1:
        raise ValueError('centering_matrix needs n >= 1, got %s' % n)
    return np.eye(n) - np.full((n, n), 1.0 / n)


def center_columns(Z):
    """Z H_n, computed without materializing H_n."""
    Z = np.asarray(Z, dtype=np.float64)
    return Z - Z.mean(axis=1, keepdims=True)


def sample_covariance(Z):
    """(1/n) (Z H)(Z H)^T for a d x n matrix Z."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise errors.DimensionMismatch(
            'sample_covariance needs a d x n matrix with n >= 1, got %s'
            % (Z.shape,))
    Zc = center_columns(Z)
    return Zc @ Zc.T / Z.shape[1]


def second_moment(Z):
    """(1/n) Z Z^T, the uncentered counterpart of sample_covariance()."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] < 1:
        raise errors.DimensionMismatch(
            'second_moment needs a d x n matrix with n >= 1, got %s'
            % (Z.shape,))
    return Z @ Z.T / Z.shape[1]
