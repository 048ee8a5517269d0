"""Kernel functions, Gram and cross-Gram matrices, and rank diagnostics.

Data matrices are m x n: column j is the point x_j.  (scikit-learn
wants samples in rows, so we transpose on the way in.)

The RBF kernel is exp(-||x - y||^2 / (2 sigma^2)), so sigma is a
length-scale.  We do not look for duplicate points; a Gram matrix that
is not full rank shows up through its min_eig, and
is_full_rank / check_full_rank() are how callers find out.
"""

import dataclasses
import hashlib

import numpy as np
import scipy.linalg
import sklearn.metrics.pairwise

from . import errors
from . import log
from . import matrixkit


RBF = 'rbf'
LINEAR = 'linear'
POLYNOMIAL = 'polynomial'
FAMILIES = (RBF, LINEAR, POLYNOMIAL)


@dataclasses.dataclass(frozen=True)
class KernelSpec(object):
    """A kernel family together with its parameters.

    sigma is used by RBF only; degree and offset by Polynomial only.
    """
    family: str = RBF
    sigma: float = 1.0
    degree: int = 2
    offset: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise errors.ConfigError('Unknown kernel "%s", expected one of %s'
                                     % (self.family, ', '.join(FAMILIES)))
        if self.family == RBF and not self.sigma > 0:
            raise errors.ConfigError('RBF sigma must be > 0, got %s'
                                     % self.sigma)
        if self.family == POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise errors.ConfigError(
                    'Polynomial degree must be an integer >= 1, got %s'
                    % self.degree)
            if self.offset < 0:
                raise errors.ConfigError(
                    'Polynomial offset must be >= 0, got %s' % self.offset)

    @classmethod
    def rbf(cls, sigma):
        return cls(RBF, sigma=sigma)

    @classmethod
    def linear(cls):
        return cls(LINEAR)

    @classmethod
    def polynomial(cls, degree, offset=0.0):
        return cls(POLYNOMIAL, degree=degree, offset=offset)

    def describe(self):
        """A short human-readable name, used in logs and manifests."""
        if self.family == RBF:
            return 'rbf(sigma=%g)' % self.sigma
        if self.family == POLYNOMIAL:
            return 'polynomial(degree=%d, offset=%g)' % (self.degree,
                                                         self.offset)
        return 'linear'

    def _pairwise_params(self):
        if self.family == RBF:
            return {'metric': 'rbf', 'gamma': 1.0 / (2.0 * self.sigma ** 2)}
        if self.family == POLYNOMIAL:
            return {'metric': 'polynomial', 'degree': int(self.degree),
                    'gamma': 1.0, 'coef0': self.offset}
        return {'metric': 'linear'}


@dataclasses.dataclass(frozen=True, eq=False)
class GramMatrix(object):
    """K = [kappa(x_i, x_j)] plus its eigen-range.

    jitter is the multiple of the identity that has already been added
    to K (0 unless configured).
    """
    K: np.ndarray
    min_eig: float
    max_eig: float
    spec: KernelSpec
    rank_tol: float = matrixkit.RANK_TOL
    jitter: float = 0.0

    @property
    def n(self):
        return self.K.shape[0]

    @property
    def is_full_rank(self):
        return self.max_eig > 0 and self.min_eig > self.rank_tol * self.max_eig

    @property
    def fingerprint(self):
        """(n, kernel spec, hash of K rounded to 1e-12).

        Used to catch an operator being applied with a different Gram
        matrix than the one it was built on.
        """
        rounded = np.round(self.K, 12) + 0.0      # + 0.0 turns -0.0 into 0.0
        digest = hashlib.sha1(np.ascontiguousarray(rounded).tobytes())
        return (self.n, self.spec, digest.hexdigest())


def _as_data(X, name='X'):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise errors.DimensionMismatch(
            '%s must be an m x n data matrix, got shape %s' % (name, X.shape))
    return X


def kernel_eval(spec, x, y):
    """kappa(x, y) for two points, straight from the formulas."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise errors.DimensionMismatch(
            'Points have different dimensions: %d vs %d'
            % (x.shape[0], y.shape[0]))
    if spec.family == RBF:
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.sigma ** 2)))
    if spec.family == POLYNOMIAL:
        return float((np.dot(x, y) + spec.offset) ** spec.degree)
    return float(np.dot(x, y))


def gram(spec, X, jitter=0.0, rank_tol=matrixkit.RANK_TOL):
    """The n x n Gram matrix of the columns of X.

    K is symmetrized by averaging with its transpose, then jitter * I
    is added (jitter is 0 unless you ask for it; it helps real data
    whose Gram matrix is numerically singular).
    """
    X = _as_data(X)
    if X.shape[1] < 1:
        raise errors.DimensionMismatch('gram needs at least one point')
    if jitter < 0:
        raise errors.ConfigError('jitter must be >= 0, got %s' % jitter)

    K = sklearn.metrics.pairwise.pairwise_kernels(
        X.T, **spec._pairwise_params())
    K = 0.5 * (K + K.T)
    if jitter:
        K = K + jitter * np.eye(K.shape[0])

    eigenvalues = scipy.linalg.eigvalsh(K)      # ascending
    result = GramMatrix(K, float(eigenvalues[0]), float(eigenvalues[-1]),
                        spec, rank_tol, jitter)
    log.v1('Gram matrix %s on %d points: eigenvalues in [%.3g, %.3g]%s',
           spec.describe(), result.n, result.min_eig, result.max_eig,
           '' if result.is_full_rank else ' (NOT full rank)')
    if result.min_eig < -1e-10 * max(result.max_eig, 0.0):
        log.warning('Gram matrix is not positive semi-definite:'
                    ' min eigenvalue %.3g', result.min_eig)
    return result


def cross_gram(spec, X, Xhat):
    """The n x k matrix [kappa(x_i, xhat_j)]."""
    X = _as_data(X)
    Xhat = _as_data(Xhat, 'Xhat')
    if X.shape[0] != Xhat.shape[0]:
        raise errors.DimensionMismatch(
            'Training points have dimension %d but query points have %d'
            % (X.shape[0], Xhat.shape[0]))
    if Xhat.shape[1] == 0 or X.shape[1] == 0:
        return np.zeros((X.shape[1], Xhat.shape[1]))
    return sklearn.metrics.pairwise.pairwise_kernels(
        X.T, Xhat.T, **spec._pairwise_params())


def check_full_rank(gram_matrix, what='Gram matrix'):
    """Raise SingularMatrix unless K is numerically full rank."""
    if not gram_matrix.is_full_rank:
        raise errors.SingularMatrix(
            '%s is rank-deficient (min eigenvalue %.3g, max %.3g, rank_tol'
            ' %.3g); are there duplicate points?  Consider --jitter.'
            % (what, gram_matrix.min_eig, gram_matrix.max_eig,
               gram_matrix.rank_tol))
