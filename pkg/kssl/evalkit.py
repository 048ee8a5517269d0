"""Recovery metrics: when are two representations "the same"?

Two representations F and G (both d x n, column i for point i) are
considered equivalent when one is an invertible affine image of the
other.  Learned representations are only ever expected to match a
target up to such a map, so everything here factors it out: whiten()
removes the affine part (up to rotation), procrustes() removes the
rotation.
"""

import typing

import numpy as np
import scipy.linalg

from . import errors
from . import matrixkit


COVARIANCE = 'covariance'
CORRELATION = 'correlation'
WHITENING_MODES = (COVARIANCE, CORRELATION)

# affine_equivalent() rejects fits whose A is worse conditioned than this.
MAX_CONDITION = 1e8


class ProcrustesReport(typing.NamedTuple):
    distance: float          # (1/n) ||F - Q F*||_F
    Q: np.ndarray            # d x d orthogonal


class Whitening(typing.NamedTuple):
    W: np.ndarray            # d x d, symmetric
    b: np.ndarray            # d
    Fw: np.ndarray           # W (F - b 1^T)

    def apply(self, G):
        """Whiten another d x k matrix with the same W and b."""
        G = np.asarray(G, dtype=np.float64)
        return self.W @ (G - self.b[:, None])


class AffineFit(typing.NamedTuple):
    A: np.ndarray
    b: np.ndarray
    residual: float          # (1/n) ||F - (A G + b 1^T)||_F


def _check_same_shape(F, G, what='Representations'):
    F = np.asarray(F, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if F.ndim != 2 or F.shape != G.shape or F.shape[1] < 1:
        raise errors.DimensionMismatch(
            '%s must be d x n matrices of the same shape, got %s and %s'
            % (what, F.shape, G.shape))
    return (F, G)


def procrustes(F, Fstar):
    """min over orthogonal Q of (1/n) ||F - Q F*||_F, and the Q.

    Reflections are allowed.  Note the distance is not symmetric in
    its arguments unless F and F* have the same norm.
    """
    (F, Fstar) = _check_same_shape(F, Fstar)
    # orthogonal_procrustes(A, B) minimizes ||A R - B||; transposing
    # turns that into ||R^T F* - F||.
    (R, _) = scipy.linalg.orthogonal_procrustes(Fstar.T, F.T)
    Q = R.T
    distance = np.linalg.norm(F - Q @ Fstar) / F.shape[1]
    return ProcrustesReport(float(distance), Q)


def whiten(F, mode=COVARIANCE, rank_tol=matrixkit.RANK_TOL):
    """Symmetric (ZCA) whitening of the rows of F.

    In covariance mode b is the row mean and W = cov(F)^-1/2, so that
    cov(Fw) = I.  In correlation mode b = 0 and W = ((1/n) F F^T)^-1/2,
    so that (1/n) Fw Fw^T = I.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[None, :]
    if mode not in WHITENING_MODES:
        raise errors.ConfigError('Unknown whitening mode "%s"' % mode)
    if mode == COVARIANCE:
        b = F.mean(axis=1)
        S = matrixkit.sample_covariance(F)
    else:
        b = np.zeros(F.shape[0])
        S = matrixkit.second_moment(F)
    try:
        W = matrixkit.matrix_power_sym(S, -0.5, rank_tol)
    except errors.SingularMatrix:
        raise errors.SingularMatrix(
            'Cannot whiten: the %s matrix of the representation is'
            ' singular (rank %d < d = %d)'
            % (mode, matrixkit.matrix_rank(S, rank_tol), F.shape[0]))
    return Whitening(W, b, W @ (F - b[:, None]))


def affine_fit(F, G):
    """Least-squares A, b with F ~= A G + b 1^T."""
    (F, G) = _check_same_shape(F, G)
    (d, n) = G.shape
    if n <= d:
        raise errors.DimensionMismatch(
            'Affine fits need more points than dimensions (n=%d, d=%d)'
            % (n, d))
    design = np.vstack([G, np.ones((1, n))]).T        # n x (d+1)
    (solution, _, _, _) = scipy.linalg.lstsq(design, F.T)
    A = solution[:d].T
    b = solution[d]
    residual = np.linalg.norm(F - (A @ G + b[:, None])) / n
    return AffineFit(A, b, float(residual))


def affine_equivalent(F, G, tol=1e-6, max_cond=MAX_CONDITION):
    """True iff F = A G + b 1^T (within tol) for a well-conditioned A."""
    fit = affine_fit(F, G)
    if fit.residual > tol:
        return False
    return bool(np.linalg.cond(fit.A) < max_cond)


def whitening_solution_set_check(Gamma, W, tol=1e-8):
    """Whether W Gamma W^T = I, entrywise within tol."""
    Gamma = np.asarray(Gamma, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if W.shape != Gamma.shape:
        return False
    product = W @ Gamma @ W.T
    return bool(np.max(np.abs(product - np.eye(Gamma.shape[0]))) <= tol)


def random_orthogonal(d, rng):
    """A Haar-distributed d x d orthogonal matrix."""
    (Q, R) = scipy.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def whitening_solutions(Gamma, rng, count=1):
    """Yield count solutions W = Q S^-1/2 U^T of W Gamma W^T = I.

    Gamma = U S U^T; Q ranges over random orthogonal matrices.  Every
    solution has this form.
    """
    (S, U) = matrixkit.sym_eig(Gamma)
    matrixkit.check_positive_definite(S, what='Gamma')
    base = (U / np.sqrt(S)).T                        # S^-1/2 U^T
    for _ in range(count):
        yield random_orthogonal(len(S), rng) @ base


def random_baseline(target, rng, centered=True):
    """Gaussian representations with the target's covariance.

    The covariance (or, when not centered, the second moment) of
    target is matched through its Cholesky factor.
    """
    target = np.asarray(target, dtype=np.float64)
    if centered:
        S = matrixkit.sample_covariance(target)
    else:
        S = matrixkit.second_moment(target)
    L = matrixkit.cholesky(S)
    baseline = L @ rng.standard_normal(target.shape)
    if centered:
        baseline = matrixkit.center_columns(baseline)
    return baseline
