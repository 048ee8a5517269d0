"""Learn f = C Phi^T by minimizing a joint-embedding loss with Adam.

Everything happens in Gram space.  A view of point i under the
identity is the column K[:, i]; under T = Phi M Phi^T it is
(K M K)[:, i] = K theta_i with theta_i = (M K)[:, i].  The model output
on a view matrix V is C V, so for a pair of view matrices the loss is
L(C V, C V') and its gradient with respect to C is

    dL/dC = dL/dZ V^T + dL/dZ' V'^T.

Training is full-batch and deterministic given the seed: in 'paired'
mode every epoch sees (K, K M K); in 'sampled' mode each epoch draws a
fresh pair of transformations per point from the augmentation
distribution.

The loss alone does not pin down C: directions of C that K maps to
zero, and (for Barlow Twins) directions outside the span the operator
acts on, are free.  norm_penalty adds eta tr(C K C^T), the squared
Hilbert-Schmidt norm of f, which selects the least-norm minimizer.
"""

import dataclasses
import typing

import numpy as np

from . import errors
from . import evalkit
from . import kernels
from . import log
from . import losses
from . import synth


PAIRED = 'paired'
SAMPLED = 'sampled'
PAIRING_MODES = (PAIRED, SAMPLED)


@dataclasses.dataclass(frozen=True)
class TrainConfig(object):
    loss: losses.LossKind = dataclasses.field(
        default_factory=lambda: losses.LossKind.from_name(losses.VICREG))
    epochs: int = 5000
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    pairing_mode: str = PAIRED
    eval_every: int = 100
    init_std: float = None       # None means 1/sqrt(n)
    norm_penalty: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise errors.ConfigError('epochs must be >= 1, got %s'
                                     % self.epochs)
        if not self.learning_rate > 0:
            raise errors.ConfigError('learning rate must be > 0, got %s'
                                     % self.learning_rate)
        for (name, beta) in (('beta1', self.adam_beta1),
                             ('beta2', self.adam_beta2)):
            if not 0 < beta < 1:
                raise errors.ConfigError('Adam %s must be in (0, 1), got %s'
                                         % (name, beta))
        if self.pairing_mode not in PAIRING_MODES:
            raise errors.ConfigError('Unknown pairing mode "%s", expected'
                                     ' one of %s'
                                     % (self.pairing_mode,
                                        ', '.join(PAIRING_MODES)))
        if self.eval_every < 1:
            raise errors.ConfigError('eval_every must be >= 1, got %s'
                                     % self.eval_every)
        if self.norm_penalty < 0:
            raise errors.ConfigError('norm penalty must be >= 0, got %s'
                                     % self.norm_penalty)


class Adam(object):
    """Adam on a single array-valued parameter."""
    def __init__(self, shape, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)         # first moment
        self.v = np.zeros(shape)         # second moment
        self.t = 0

    def step(self, param, grad):
        """Update param in place."""
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (grad * grad)
        step_size = self.lr / (1.0 - self.beta1 ** self.t)
        denom = np.sqrt(self.v / (1.0 - self.beta2 ** self.t)) + self.eps
        param -= step_size * self.m / denom


@dataclasses.dataclass
class TrainState(object):
    C: np.ndarray                # d x n learnable coefficients
    optimizer: Adam
    epoch: int
    rng: np.random.Generator


class TraceRecord(typing.NamedTuple):
    epoch: int
    loss: float
    procrustes_to_target: float
    procrustes_random_baseline: float


class TrainTrace(object):
    def __init__(self):
        self.records = []

    def append(self, record):
        assert not self.records or record.epoch > self.records[-1].epoch, (
            'Trace epochs must increase (%s after %s)'
            % (record.epoch, self.records[-1].epoch))
        self.records.append(record)

    @property
    def final(self):
        return self.records[-1]

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def augmented_view(gram, op):
    """K M K: column i is the Gram-space view of T applied to x_i."""
    return gram.K @ op.M @ gram.K


def draw_pairing(dist, n, rng):
    """Boolean (t, t') per point: True where that view applies T."""
    if dist.pairing == synth.CONDITIONED_DISTINCT:
        first = rng.integers(0, 2, size=n).astype(bool)
        return (first, ~first)
    draws = rng.integers(0, 2, size=(2, n)).astype(bool)
    return (draws[0], draws[1])


def make_views(gram, dist, rng, pairing_mode=PAIRED, augmented=None):
    """The (V, V') view matrices for one epoch.

    augmented is augmented_view(gram, dist.operator), if you have it.
    """
    synth.check_fingerprint(dist.operator, gram)
    if augmented is None:
        augmented = augmented_view(gram, dist.operator)
    if pairing_mode == PAIRED:
        return (gram.K, augmented)
    (t, t_prime) = draw_pairing(dist, gram.n, rng)
    return (np.where(t[None, :], augmented, gram.K),
            np.where(t_prime[None, :], augmented, gram.K))


def forward(C, V):
    """Z = C V."""
    C = np.asarray(C, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if C.ndim != 2 or V.ndim != 2 or C.shape[1] != V.shape[0]:
        raise errors.DimensionMismatch(
            'Cannot apply %s coefficients to a %s view matrix'
            % (C.shape, V.shape))
    return C @ V


def objective(loss_kind, C, V, Vp, K=None, norm_penalty=0.0):
    """(value, dValue/dC) of the loss on views (V, Vp), plus the penalty."""
    (value, grad_Z, grad_Zp) = loss_kind.value_and_grad(forward(C, V),
                                                        forward(C, Vp))
    grad = grad_Z @ V.T + grad_Zp @ Vp.T
    if norm_penalty:
        CK = C @ K
        value += norm_penalty * float(np.sum(CK * C))
        grad = grad + 2.0 * norm_penalty * CK
    return (value, grad)


def gradient_check(loss_kind, C, V, Vp, step=1e-5, K=None,
                   norm_penalty=0.0):
    """Max relative error of the analytic dL/dC against central differences.

    Entries are compared relative to the larger of the two values,
    floored at 1e-3 of the largest analytic entry so that entries which
    are zero up to roundoff don't dominate.
    """
    C = np.array(C, dtype=np.float64)
    (_, analytic) = objective(loss_kind, C, V, Vp, K, norm_penalty)
    numeric = np.zeros_like(C)
    for index in np.ndindex(*C.shape):
        saved = C[index]
        C[index] = saved + step
        (plus, _) = objective(loss_kind, C, V, Vp, K, norm_penalty)
        C[index] = saved - step
        (minus, _) = objective(loss_kind, C, V, Vp, K, norm_penalty)
        C[index] = saved
        numeric[index] = (plus - minus) / (2.0 * step)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)),
                       max(1e-3 * np.max(np.abs(analytic)), 1e-10))
    return float(np.max(np.abs(analytic - numeric) / scale))


def comparison_target(loss_kind, target_F):
    """The form of the target that loss_kind recovers up to rotation.

    Barlow Twins recovers f* itself.  The VICReg losses recover the
    covariance-whitened target; SCL and VICReg-corr recover the
    correlation-whitened one.
    """
    if loss_kind.name == losses.BARLOW_TWINS:
        return np.asarray(target_F, dtype=np.float64)
    mode = evalkit.COVARIANCE if loss_kind.centered else evalkit.CORRELATION
    return evalkit.whiten(target_F, mode).Fw


def learned_representation(loss_kind, C, gram):
    """C K, centered when the loss cannot see the mean."""
    Y = C @ gram.K
    if loss_kind.centered:
        Y = Y - Y.mean(axis=1, keepdims=True)
    return Y


def initial_state(cfg, d, n, init_C=None):
    rng = np.random.default_rng(cfg.seed)
    if init_C is not None:
        C = np.array(init_C, dtype=np.float64)
        if C.shape != (d, n):
            raise errors.DimensionMismatch(
                'Initial coefficients have shape %s, expected %s'
                % (C.shape, (d, n)))
    else:
        std = cfg.init_std if cfg.init_std is not None else 1.0 / np.sqrt(n)
        C = rng.normal(0.0, std, size=(d, n))
    optimizer = Adam(C.shape, cfg.learning_rate, cfg.adam_beta1,
                     cfg.adam_beta2, cfg.adam_eps)
    return TrainState(C, optimizer, 0, rng)


def train(X, kernel, dist, target_F, cfg, gram=None, init_C=None):
    """Train C from init_C (default: random) and trace recovery.

    Trace rows are taken before the update at epoch 0 and every
    eval_every epochs, plus one for the final coefficients at epoch
    cfg.epochs.  Returns (TrainState, TrainTrace).
    """
    if gram is None:
        gram = kernels.gram(kernel, getattr(X, 'values', X))
    kernels.check_full_rank(gram)
    synth.check_fingerprint(dist.operator, gram)
    target_F = np.asarray(target_F, dtype=np.float64)
    if target_F.ndim != 2 or target_F.shape[1] != gram.n:
        raise errors.DimensionMismatch(
            'Target has shape %s but there are %d training points'
            % (target_F.shape, gram.n))
    loss_kind = cfg.loss

    target = comparison_target(loss_kind, target_F)
    baseline_rng = np.random.default_rng([cfg.seed, 2])
    baseline = evalkit.random_baseline(target, baseline_rng,
                                       loss_kind.centered)
    baseline_distance = evalkit.procrustes(baseline, target).distance

    state = initial_state(cfg, target.shape[0], gram.n, init_C)
    augmented = augmented_view(gram, dist.operator)
    trace = TrainTrace()
    log.info('Training %s for %d epochs (n=%d, d=%d, lr=%g, %s views)',
             loss_kind.describe(), cfg.epochs, gram.n, target.shape[0],
             cfg.learning_rate, cfg.pairing_mode)

    def record(epoch, value):
        Y = learned_representation(loss_kind, state.C, gram)
        distance = evalkit.procrustes(Y, target).distance
        trace.append(TraceRecord(epoch, value, distance, baseline_distance))
        log.v2('epoch %d: loss %.6g, procrustes %.4g (baseline %.4g)',
               epoch, value, distance, baseline_distance)

    last_good = -1
    for epoch in range(cfg.epochs + 1):
        state.epoch = epoch
        (V, Vp) = make_views(gram, dist, state.rng, cfg.pairing_mode,
                             augmented)
        (value, grad) = objective(loss_kind, state.C, V, Vp, gram.K,
                                  cfg.norm_penalty)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise errors.NonFiniteLoss(
                'Loss became non-finite at epoch %d; try a smaller'
                ' learning rate' % epoch, last_good)
        last_good = epoch
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
            record(epoch, value)
        if epoch < cfg.epochs:
            state.optimizer.step(state.C, grad)

    log.info('Finished: loss %.6g, procrustes %.4g (baseline %.4g)',
             trace.final.loss, trace.final.procrustes_to_target,
             trace.final.procrustes_random_baseline)
    return (state, trace)
