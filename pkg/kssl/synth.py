"""Synthesize the optimal augmentation for a kernel, data and target.

The pipeline is:

1. krr_fit(): kernel ridge regression of the target F (d x n) on the
   Gram matrix K, giving representer coefficients C with f* = C Phi^T.
2. build_vicreg_scl_operator() or build_barlow_twins_operator(): an
   n x n coefficient matrix M such that T = Phi M Phi^T is the
   augmentation that, paired with the identity, makes f* (up to an
   orthogonal/affine map) the least-norm minimizer of the loss.
3. augment_coefficients(): M K_cross, whose column j holds the
   coefficients theta_j of the augmented Hilbert-space point for query
   j.  preimage.py turns those back into input-space points.

Operators are only ever stored as M; nothing here materializes Phi.
"""

import dataclasses
import typing

import numpy as np
import scipy.linalg

from . import errors
from . import kernels
from . import log
from . import losses
from . import matrixkit


# Operator families.
VICREG_SCL = 'vicreg-scl'
BARLOW_TWINS = 'barlow-twins'

# Pairing of the two views drawn for each point.
INDEPENDENT_PAIR = 'independent-pair'
CONDITIONED_DISTINCT = 'conditioned-distinct'
PAIRINGS = (INDEPENDENT_PAIR, CONDITIONED_DISTINCT)

# An eigenvalue of MK within this of 1 counts towards the projection rank.
PROJECTION_TOL = 1e-6


def family_for_method(method):
    """Which operator family serves a given loss name."""
    if method == losses.BARLOW_TWINS:
        return BARLOW_TWINS
    if method in losses.KINDS:
        return VICREG_SCL
    raise errors.ConfigError('Unknown method "%s", expected one of %s'
                             % (method, ', '.join(losses.KINDS)))


@dataclasses.dataclass(frozen=True, eq=False)
class CoefficientMatrix(object):
    """Representer coefficients C (d x n), so that f = C Phi^T.

    lambda_ridge is 0 for the exact interpolant C = F K^-1.
    """
    C: np.ndarray
    lambda_ridge: float = 0.0

    @property
    def source(self):
        return 'exact' if self.lambda_ridge == 0 else 'ridge'

    @property
    def d(self):
        return self.C.shape[0]

    @property
    def n(self):
        return self.C.shape[1]


@dataclasses.dataclass(frozen=True, eq=False)
class AugmentationOperator(object):
    """T = Phi M Phi^T, stored as M, plus what it was built for.

    checks holds the numerical self-checks done at construction time
    (residual norms and ranks), keyed by name; they end up in the
    synthesize manifest.
    """
    M: np.ndarray
    family: str
    gram_fingerprint: tuple
    checks: dict = dataclasses.field(default_factory=dict)

    @property
    def n(self):
        return self.M.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class AugmentationDistribution(object):
    """The identity and T, each with probability 1/2, drawn per view.

    With independent-pair, (T_i, T'_i) are drawn independently; with
    conditioned-distinct the pair is conditioned on T_i != T'_i, so it
    is (identity, T) or (T, identity).  Barlow Twins needs the latter.
    """
    operator: AugmentationOperator
    pairing: str = None

    def __post_init__(self):
        if self.pairing is None:
            default = (CONDITIONED_DISTINCT
                       if self.operator.family == BARLOW_TWINS
                       else INDEPENDENT_PAIR)
            object.__setattr__(self, 'pairing', default)
        if self.pairing not in PAIRINGS:
            raise errors.ConfigError('Unknown pairing "%s", expected one of %s'
                                     % (self.pairing, ', '.join(PAIRINGS)))
        if (self.operator.family == BARLOW_TWINS and
                self.pairing != CONDITIONED_DISTINCT):
            raise errors.ConfigError(
                'Barlow Twins operators need the conditioned-distinct pairing')


class SynthesisResult(typing.NamedTuple):
    coefficients: CoefficientMatrix
    operator: AugmentationOperator
    augmented: np.ndarray        # n x k, column j = theta_j for query j


def _coefficient_array(C):
    return np.asarray(getattr(C, 'C', C), dtype=np.float64)


def _check_coefficients(C, gram, rank_tol):
    if C.ndim != 2 or C.shape[1] != gram.n:
        raise errors.DimensionMismatch(
            'Coefficients have shape %s but the Gram matrix is %d x %d'
            % (C.shape, gram.n, gram.n))
    rank = matrixkit.matrix_rank(C, rank_tol)
    if rank < C.shape[0]:
        raise errors.RankDeficientTarget(
            'Coefficient matrix has rank %d < d = %d; the target'
            ' representation must have full-rank covariance'
            % (rank, C.shape[0]))


def _relative(residual, scale):
    return float(residual / max(scale, np.finfo(float).tiny))


def krr_fit(F, gram, lambda_ridge=0.0):
    """C = F (K + lambda_ridge I)^-1.

    With lambda_ridge = 0 this interpolates the target exactly
    (C K = F) and needs K to be full rank.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[None, :]
    if F.ndim != 2 or F.shape[1] != gram.n:
        raise errors.DimensionMismatch(
            'Target has shape %s but there are %d training points'
            % (F.shape, gram.n))
    (d, n) = F.shape
    if d >= n:
        raise errors.RankDeficientTarget(
            'Target dimension d = %d must be smaller than n = %d' % (d, n))
    if lambda_ridge < 0:
        raise errors.ConfigError('lambda_ridge must be >= 0, got %s'
                                 % lambda_ridge)
    if lambda_ridge == 0:
        kernels.check_full_rank(gram,
                                'Gram matrix (needed for lambda_ridge=0)')

    system = gram.K + lambda_ridge * np.eye(n)
    try:
        C = scipy.linalg.solve(system, F.T, assume_a='pos').T
    except np.linalg.LinAlgError as e:
        raise errors.SingularMatrix('Kernel ridge system is singular: %s' % e)

    if lambda_ridge == 0:
        log.v2('krr_fit: interpolation residual %.3g',
               np.linalg.norm(C @ gram.K - F) / max(1.0, np.linalg.norm(F)))
    _check_coefficients(C, gram, gram.rank_tol)
    log.v1('krr_fit: d=%d, n=%d, lambda_ridge=%g, ||C||_F=%.4g',
           d, n, lambda_ridge, np.linalg.norm(C))
    return CoefficientMatrix(C, float(lambda_ridge))


def _gram_of_coefficients(C, gram):
    """(C K C^T)^-1, raising SingularMatrix if it doesn't exist."""
    A = C @ gram.K @ C.T
    try:
        return matrixkit.matrix_power_sym(A, -1.0, gram.rank_tol)
    except errors.SingularMatrix:
        raise errors.SingularMatrix(
            'C K C^T is numerically singular; is the Gram matrix full rank?')


def projection_rank(M, K, tol=PROJECTION_TOL):
    """Number of eigenvalues of M K equal to 1 within tol."""
    eigenvalues = scipy.linalg.eigvals(M @ K)
    return int(np.sum(np.abs(eigenvalues - 1.0) <= tol))


def build_vicreg_scl_operator(C, gram):
    """M = C^T (C K C^T)^-1 C, the operator for VICReg and SCL.

    T = Phi M Phi^T is the K-orthogonal projection onto the span of
    the rows of C, so M K M = M and f* = C Phi^T is invariant under it.
    M depends on C only through its row space.
    """
    C = _coefficient_array(C)
    _check_coefficients(C, gram, gram.rank_tol)
    M = C.T @ _gram_of_coefficients(C, gram) @ C
    M = 0.5 * (M + M.T)

    K = gram.K
    CK = C @ K
    checks = {
        'mkm_residual': _relative(np.linalg.norm(M @ K @ M - M),
                                  np.linalg.norm(M)),
        'invariance_residual': _relative(np.linalg.norm(CK @ M @ K - CK),
                                         np.linalg.norm(CK)),
        'projection_rank': projection_rank(M, K),
    }
    log.v1('VICReg/SCL operator: MKM residual %.3g, invariance residual'
           ' %.3g, projection rank %d (d=%d)', checks['mkm_residual'],
           checks['invariance_residual'], checks['projection_rank'],
           C.shape[0])
    return AugmentationOperator(M, VICREG_SCL, gram.fingerprint, checks)


def build_barlow_twins_operator(C, gram):
    """M = K^-1/2 B K^-1/2 where K B + B K = RHS and

        RHS = 2n K^1/2 C^T (C K C^T)^-2 C K^1/2.

    With views (K, K M K) the symmetrized cross-correlation of C is
    then exactly I.
    """
    C = _coefficient_array(C)
    kernels.check_full_rank(gram, 'Gram matrix (needed for Barlow Twins)')
    _check_coefficients(C, gram, gram.rank_tol)
    K = gram.K
    n = gram.n

    K_half = matrixkit.matrix_power_sym(K, 0.5, gram.rank_tol)
    K_inv_half = matrixkit.matrix_power_sym(K, -0.5, gram.rank_tol)
    A_inv = _gram_of_coefficients(C, gram)
    rhs = 2.0 * n * K_half @ C.T @ A_inv @ A_inv @ C @ K_half
    rhs = 0.5 * (rhs + rhs.T)

    solution = matrixkit.lyapunov_solve(K, rhs, gram.rank_tol)
    M = K_inv_half @ solution.B @ K_inv_half
    M = 0.5 * (M + M.T)

    Z = C @ K
    Zp = Z @ M @ K
    corr = losses.cross_correlation(Z, Zp)
    checks = {
        'lyapunov_residual': _relative(solution.residual_norm,
                                       max(1.0, np.linalg.norm(rhs))),
        'bt_identity_residual': float(
            np.linalg.norm(corr - np.eye(C.shape[0]))),
    }
    log.v1('Barlow Twins operator: Lyapunov residual %.3g, identity'
           ' residual %.3g', checks['lyapunov_residual'],
           checks['bt_identity_residual'])
    return AugmentationOperator(M, BARLOW_TWINS, gram.fingerprint, checks)


def build_operator(method, C, gram):
    if family_for_method(method) == BARLOW_TWINS:
        return build_barlow_twins_operator(C, gram)
    return build_vicreg_scl_operator(C, gram)


def check_fingerprint(op, gram):
    if gram.fingerprint != op.gram_fingerprint:
        raise errors.GramMismatch(
            'Operator was built on a different Gram matrix (%s, %s) than'
            ' the one given (%s, %s)'
            % (op.gram_fingerprint[0], op.gram_fingerprint[1].describe(),
               gram.n, gram.spec.describe()))


def augment_coefficients(op, K_cross, gram=None):
    """M K_cross: column j holds theta_j for query j.

    If gram is given it must be the one op was built on.
    """
    if gram is not None:
        check_fingerprint(op, gram)
    K_cross = np.asarray(K_cross, dtype=np.float64)
    if K_cross.ndim != 2 or K_cross.shape[0] != op.n:
        raise errors.DimensionMismatch(
            'Cross-Gram matrix has shape %s but the operator is %d x %d'
            % (K_cross.shape, op.n, op.n))
    return op.M @ K_cross


def representation_of_augmented(C_model, gram, theta):
    """C_model K theta: the model output on the Hilbert point Phi theta.

    theta may be a single n-vector or an n x k matrix of them.
    """
    C_model = _coefficient_array(C_model)
    theta = np.asarray(theta, dtype=np.float64)
    if C_model.ndim != 2 or C_model.shape[1] != gram.n:
        raise errors.DimensionMismatch(
            'Model coefficients have shape %s but n = %d'
            % (C_model.shape, gram.n))
    if theta.shape[0] != gram.n or theta.ndim > 2:
        raise errors.DimensionMismatch(
            'theta has shape %s but n = %d' % (theta.shape, gram.n))
    return C_model @ (gram.K @ theta)


def synthesize(F, gram, method, lambda_ridge=0.0, K_cross=None):
    """Fit, build the operator for method, and augment the queries.

    K_cross is the n x k cross-Gram of the training points against the
    queries; by default the queries are the training points themselves.
    """
    coefficients = krr_fit(F, gram, lambda_ridge)
    operator = build_operator(method, coefficients, gram)
    if K_cross is None:
        K_cross = gram.K
    augmented = augment_coefficients(operator, K_cross, gram)
    return SynthesisResult(coefficients, operator, augmented)
