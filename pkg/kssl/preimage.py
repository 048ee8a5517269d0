"""Map augmented Hilbert-space points back to input space.

For a point Phi theta we look for x' whose inner products with the
training points, X^T x', match (X^T X - mu_p K^-1) theta in the least
squares sense.  The minimum-norm solution is

    x' = (X^T)^+ (X^T X - mu_p K^-1) theta.

The mu_p term pulls the pre-image away from the linear-kernel answer
X theta in proportion to how much K disagrees with X^T X; with the
linear kernel and mu_p = 0 it is exactly X theta.  Nothing clips the
result to a valid input range unless PreimageConfig.clamp is set.
"""

import dataclasses

import numpy as np

from . import errors
from . import kernels
from . import log
from . import matrixkit


@dataclasses.dataclass(frozen=True)
class PreimageConfig(object):
    mu_p: float = 1.0
    rank_tol: float = matrixkit.RANK_TOL
    clamp: tuple = None          # (low, high), or None for raw vectors

    def __post_init__(self):
        if self.mu_p < 0:
            raise errors.ConfigError('mu_p must be >= 0, got %s' % self.mu_p)
        if self.clamp is not None:
            (low, high) = self.clamp
            if not low <= high:
                raise errors.ConfigError('Bad clamp range [%s, %s]'
                                         % (low, high))


def _check_shapes(X, gram):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != gram.n:
        raise errors.DimensionMismatch(
            'Data matrix has shape %s but the Gram matrix is %d x %d'
            % (X.shape, gram.n, gram.n))
    return X


def _check_theta(theta, n):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim not in (1, 2) or theta.shape[0] != n:
        raise errors.DimensionMismatch(
            'theta must have %d rows, got shape %s' % (n, theta.shape))
    return theta


def inner_product_targets(X, gram, cfg):
    """The n x n matrix X^T X - mu_p K^-1."""
    X = _check_shapes(X, gram)
    result = X.T @ X
    if cfg.mu_p > 0:
        kernels.check_full_rank(gram, 'Gram matrix (needed for mu_p > 0)')
        result = result - cfg.mu_p * matrixkit.matrix_power_sym(
            gram.K, -1.0, cfg.rank_tol)
    return result


def preimage_operator(X, gram, cfg):
    """The m x n matrix P with preimage(theta) = P theta."""
    X = _check_shapes(X, gram)
    return matrixkit.pinv(X.T, cfg.rank_tol) @ inner_product_targets(
        X, gram, cfg)


def preimage(X, gram, theta, cfg=PreimageConfig()):
    """Pre-image(s) of Phi theta.

    theta is an n-vector (returns an m-vector) or an n x k matrix
    whose columns are mapped independently (returns m x k).
    """
    X = _check_shapes(X, gram)
    theta = _check_theta(theta, gram.n)
    result = preimage_operator(X, gram, cfg) @ theta
    if cfg.clamp is not None:
        result = np.clip(result, cfg.clamp[0], cfg.clamp[1])
    log.v2('Computed %d pre-image(s) in R^%d',
           1 if theta.ndim == 1 else theta.shape[1], X.shape[0])
    return result


def preimage_residual(X, gram, theta, x_prime, cfg=PreimageConfig()):
    """||X^T x' - (X^T X - mu_p K^-1) theta||, the least-squares misfit."""
    X = _check_shapes(X, gram)
    theta = _check_theta(theta, gram.n)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    misfit = X.T @ x_prime - inner_product_targets(X, gram, cfg) @ theta
    return float(np.linalg.norm(misfit))
