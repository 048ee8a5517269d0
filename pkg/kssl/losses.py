"""Joint-embedding losses on pairs of d x n representation matrices.

Z holds f applied to one view of each point in a batch, Zp (Z') the
other view; column i of each comes from the same point.  All losses
here work on materialized matrices: the expectation over augmentations
is the trainer's business.

Every loss comes in two flavors: loss_X(Z, Zp, ...) returns a float,
and loss_X_with_grad(Z, Zp, ...) returns (value, dL/dZ, dL/dZp).  The
gradients are analytic.  For anything that is a function g(S) of a
second-moment matrix S = (1/n) Y Y^T (Y = Z or Z centered), the
gradient with respect to Z is (2/n) G Y, G = dg/dS symmetric; centering
commutes with that, since (Z H) H = Z H.

The Barlow Twins off-diagonal term defaults to lambda * sum (1 - C_ij)^2.
That form does *not* vanish at C = I; pass standard_offdiag=True for
the lambda * sum C_ij^2 form whose minimizers are exactly C = I.  The
trainer uses the latter by default.
"""

import dataclasses

import numpy as np

from . import errors
from . import matrixkit


VICREG = 'vicreg'
VICREG_ORIGINAL = 'vicreg-original'
VICREG_CORR = 'vicreg-corr'
BARLOW_TWINS = 'barlow-twins'
SCL = 'scl'
KINDS = (VICREG, VICREG_ORIGINAL, VICREG_CORR, BARLOW_TWINS, SCL)

# Variance-term forms for VICReg.
VARIANCE = 'variance'          # (1 - cov_ii)^2
STD_HINGE = 'std-hinge'        # max(0, 1 - sqrt(cov_ii + eps))
STD_SQUARED = 'std-squared'    # (1 - sqrt(cov_ii))^2
VARIANCE_MODES = (VARIANCE, STD_HINGE, STD_SQUARED)

ZERO_TOL = 1e-8

# sqrt'(s) blows up at 0; std-squared gradients floor s here.
_STD_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class VicregWeights(object):
    lam: float = 5.0            # invariance (s) weight
    mu: float = 5.0             # variance (v) weight
    nu: float = 1.0             # covariance (c) weight
    variance_mode: str = VARIANCE
    epsilon: float = 1e-4       # used by std-hinge only

    def __post_init__(self):
        for (name, value) in (('lambda', self.lam), ('mu', self.mu),
                              ('nu', self.nu)):
            if not value > 0:
                raise errors.ConfigError(
                    'VICReg weight %s must be > 0, got %s' % (name, value))
        if self.variance_mode not in VARIANCE_MODES:
            raise errors.ConfigError(
                'Unknown variance mode "%s", expected one of %s'
                % (self.variance_mode, ', '.join(VARIANCE_MODES)))
        if self.variance_mode == STD_HINGE and not self.epsilon > 0:
            raise errors.ConfigError(
                'std-hinge epsilon must be > 0, got %s' % self.epsilon)


def _check_pair(Z, Zp):
    Z = np.asarray(Z, dtype=np.float64)
    Zp = np.asarray(Zp, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
        raise errors.DimensionMismatch(
            'Representations must be d x n with d, n >= 1, got %s'
            % (Z.shape,))
    if Z.shape != Zp.shape:
        raise errors.DimensionMismatch(
            'Representation pair has mismatched shapes %s and %s'
            % (Z.shape, Zp.shape))
    return (Z, Zp)


def _offdiag(A):
    return A - np.diag(np.diag(A))


# --- VICReg --------------------------------------------------------------

def _variance_term(S, w):
    """v and dv/dS for a second-moment matrix S (diagonal only matters)."""
    d = S.shape[0]
    s = np.diag(S)
    if w.variance_mode == VARIANCE:
        value = np.sum((1.0 - s) ** 2) / d
        dvds = -2.0 * (1.0 - s) / d
    elif w.variance_mode == STD_HINGE:
        r = np.sqrt(np.clip(s, 0.0, None) + w.epsilon)
        value = np.sum(np.maximum(0.0, 1.0 - r)) / d
        dvds = -np.where(1.0 - r > 0, 1.0, 0.0) / (2.0 * r * d)
    else:
        root = np.sqrt(np.clip(s, _STD_FLOOR, None))
        value = np.sum((1.0 - np.sqrt(np.clip(s, 0.0, None))) ** 2) / d
        dvds = -(1.0 - root) / (root * d)
    return (value, np.diag(dvds))


def _covariance_term(S):
    d = S.shape[0]
    off = _offdiag(S)
    return (np.sum(off ** 2) / d, 2.0 * off / d)


def _invariance_term(Z, Zp):
    n = Z.shape[1]
    diff = Z - Zp
    return (np.sum(diff ** 2) / n, 2.0 * diff / n)


def _vicreg(Z, Zp, w, centered):
    """Shared body of VICReg (centered) and VICReg-corr (uncentered)."""
    (Z, Zp) = _check_pair(Z, Zp)
    n = Z.shape[1]
    (s, ds) = _invariance_term(Z, Zp)
    value = w.lam * s
    grads = [w.lam * ds, -w.lam * ds]
    for (k, Y) in enumerate((Z, Zp)):
        if centered:
            Y = matrixkit.center_columns(Y)
        S = Y @ Y.T / n
        (v, G_v) = _variance_term(S, w)
        (c, G_c) = _covariance_term(S)
        value += w.mu * v + w.nu * c
        grads[k] = grads[k] + (2.0 / n) * (w.mu * G_v + w.nu * G_c) @ Y
    return (float(value), grads[0], grads[1])


def loss_vicreg_with_grad(Z, Zp, w):
    return _vicreg(Z, Zp, w, centered=True)


def loss_vicreg(Z, Zp, w):
    """lambda s(Z, Z') + mu (v(Z) + v(Z')) + nu (c(Z) + c(Z')).

    s(Z, Z') = (1/n) sum_i ||z_i - z'_i||^2
    v(Z)     = (1/d) sum_k (1 - cov(Z)_kk)^2   (or a std form; see
               VicregWeights.variance_mode)
    c(Z)     = (1/d) sum_{k != l} cov(Z)_kl^2
    """
    return loss_vicreg_with_grad(Z, Zp, w)[0]


def loss_vicreg_corr_with_grad(Z, Zp, w):
    return _vicreg(Z, Zp, w, centered=False)


def loss_vicreg_corr(Z, Zp, w):
    """VICReg with (1/n) Z Z^T in place of cov(Z) in v and c."""
    return loss_vicreg_corr_with_grad(Z, Zp, w)[0]


# --- Barlow Twins --------------------------------------------------------

def cross_correlation(Z, Zp):
    """The symmetrized, unnormalized (1/2n)(Z Z'^T + Z' Z^T)."""
    (Z, Zp) = _check_pair(Z, Zp)
    n = Z.shape[1]
    cross = Z @ Zp.T
    return (cross + cross.T) / (2.0 * n)


def loss_barlow_twins_with_grad(Z, Zp, lam=1.0, standard_offdiag=False):
    (Z, Zp) = _check_pair(Z, Zp)
    if not lam > 0:
        raise errors.ConfigError('Barlow Twins lambda must be > 0, got %s'
                                 % lam)
    n = Z.shape[1]
    corr = cross_correlation(Z, Zp)
    diagonal = np.diag(corr)
    off = _offdiag(corr)
    mask = _offdiag(np.ones_like(corr))

    on_value = np.sum((1.0 - diagonal) ** 2)
    if standard_offdiag:
        off_value = np.sum(off ** 2)
        G_off = 2.0 * off
    else:
        off_value = np.sum(((1.0 - corr) * mask) ** 2)
        G_off = -2.0 * (1.0 - corr) * mask
    G = np.diag(-2.0 * (1.0 - diagonal)) + lam * G_off

    value = on_value + lam * off_value
    return (float(value), G @ Zp / n, G @ Z / n)


def loss_barlow_twins(Z, Zp, lam=1.0, standard_offdiag=False):
    """sum_i (1 - C_ii)^2 + lam * offdiag, with C = cross_correlation(Z, Z').

    offdiag is sum_{i != j} (1 - C_ij)^2 by default and
    sum_{i != j} C_ij^2 with standard_offdiag.
    """
    return loss_barlow_twins_with_grad(Z, Zp, lam, standard_offdiag)[0]


# --- Spectral contrastive loss --------------------------------------------

def loss_scl_with_grad(Z, Zp):
    (Z, Zp) = _check_pair(Z, Zp)
    n = Z.shape[1]
    P = Z.T @ Zp                                 # P_ij = <z_i, z'_j>
    P_off = _offdiag(P)
    norms = np.sum(Z ** 2, axis=0)
    norms_p = np.sum(Zp ** 2, axis=0)

    value = (np.sum(P_off ** 2) / n ** 2
             - 2.0 * np.trace(P) / n
             + (np.sum(norms ** 2) + np.sum(norms_p ** 2)) / (2.0 * n ** 2))

    D = (2.0 / n ** 2) * P_off - (2.0 / n) * np.eye(n)
    grad = Zp @ D.T + (2.0 / n ** 2) * Z * norms
    grad_p = Z @ D + (2.0 / n ** 2) * Zp * norms_p
    return (float(value), grad, grad_p)


def loss_scl(Z, Zp):
    """Spectral contrastive loss in its expanded, batch form.

        (1/n^2) ||Z^T Z' - diag(Z^T Z')||_F^2 - (2/n) tr(Z^T Z')
            + (1/2n^2) sum_i (||z_i||^4 + ||z'_i||^4)

    Bounded below by -d, with equality iff Z = Z' and (1/n) Z Z^T = I.
    """
    return loss_scl_with_grad(Z, Zp)[0]


# --- Loss kinds ----------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class LossKind(object):
    """A loss together with its hyper-parameters.

    Use from_name() rather than the constructor; it fills in the right
    weights for the variants.
    """
    name: str
    weights: VicregWeights = None
    bt_lambda: float = 1.0
    standard_offdiag: bool = False

    def __post_init__(self):
        if self.name not in KINDS:
            raise errors.ConfigError('Unknown loss "%s", expected one of %s'
                                     % (self.name, ', '.join(KINDS)))
        if self.name in (VICREG, VICREG_ORIGINAL, VICREG_CORR):
            assert self.weights is not None, '%s needs weights' % self.name
        if self.name == BARLOW_TWINS and not self.bt_lambda > 0:
            raise errors.ConfigError('Barlow Twins lambda must be > 0, got %s'
                                     % self.bt_lambda)

    @classmethod
    def from_name(cls, name, lam=5.0, mu=5.0, nu=1.0,
                  variance_mode=VARIANCE, epsilon=1e-4,
                  bt_lambda=1.0, standard_offdiag=True):
        if name == VICREG_ORIGINAL:
            variance_mode = STD_HINGE
        if name in (VICREG, VICREG_ORIGINAL, VICREG_CORR):
            weights = VicregWeights(lam, mu, nu, variance_mode, epsilon)
        else:
            weights = None
        return cls(name, weights, bt_lambda, standard_offdiag)

    @property
    def centered(self):
        """Whether the loss only sees centered representations.

        The covariance-based VICReg losses are blind to a shift of f.
        Barlow Twins uses the uncentered cross-correlation, so it is not.
        """
        return self.name in (VICREG, VICREG_ORIGINAL)

    def value_and_grad(self, Z, Zp):
        if self.name in (VICREG, VICREG_ORIGINAL):
            return loss_vicreg_with_grad(Z, Zp, self.weights)
        if self.name == VICREG_CORR:
            return loss_vicreg_corr_with_grad(Z, Zp, self.weights)
        if self.name == BARLOW_TWINS:
            return loss_barlow_twins_with_grad(Z, Zp, self.bt_lambda,
                                               self.standard_offdiag)
        return loss_scl_with_grad(Z, Zp)

    def value(self, Z, Zp):
        return self.value_and_grad(Z, Zp)[0]

    def describe(self):
        if self.weights is not None:
            return ('%s(lambda=%g, mu=%g, nu=%g, %s)'
                    % (self.name, self.weights.lam, self.weights.mu,
                       self.weights.nu, self.weights.variance_mode))
        if self.name == BARLOW_TWINS:
            return ('%s(lambda=%g, %s off-diagonal)'
                    % (self.name, self.bt_lambda,
                       'standard' if self.standard_offdiag else 'literal'))
        return self.name


def _close(A, B, tol):
    return bool(np.max(np.abs(A - B)) <= tol) if A.size else True


def zero_loss_conditions(kind, Z, Zp, tol=ZERO_TOL):
    """Whether (Z, Zp) is at a global optimum of the given loss.

    kind is a LossKind or one of the KINDS names.  For the VICReg
    family and SCL this is Z = Z' plus an identity second moment
    (cov(Z) for VICReg, (1/n) Z Z^T for VICReg-corr and SCL).  For
    Barlow Twins it is C = I, the zero set of the standard form.
    Tolerances are absolute, entrywise.
    """
    name = getattr(kind, 'name', kind)
    (Z, Zp) = _check_pair(Z, Zp)
    d = Z.shape[0]
    identity = np.eye(d)

    if name == BARLOW_TWINS:
        return _close(cross_correlation(Z, Zp), identity, tol)

    if not _close(Z, Zp, tol):
        return False
    if name in (VICREG, VICREG_ORIGINAL):
        return _close(matrixkit.sample_covariance(Z), identity, tol)
    if name in (VICREG_CORR, SCL):
        return _close(matrixkit.second_moment(Z), identity, tol)
    raise errors.ConfigError('Unknown loss "%s"' % name)
