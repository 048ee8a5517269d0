"""The configuration of one kssl run.

A run is described by a RunConfig.  It can come from a JSON file (an
object whose keys are RunConfig field names), from commandline flags,
or both; flags win.  Fields left unset (None) get per-command defaults
in for_command(): the synthesize defaults (RBF sigma=3, lambda_ridge=1,
mu_p=1) differ from the train defaults (RBF sigma=1, lambda_ridge=0).
"""

import dataclasses
import json

from . import dataio
from . import errors
from . import kernels
from . import losses
from . import preimage
from . import trainer


SYNTHESIZE = 'synthesize'
TRAIN = 'train'
DEMO_SPIKED = 'demo-spiked'
COMMANDS = (SYNTHESIZE, TRAIN, DEMO_SPIKED)

_COMMAND_DEFAULTS = {
    SYNTHESIZE: {'sigma': 3.0, 'lambda_ridge': 1.0, 'mu_p': 1.0,
                 'data': 'gaussian:m=20,n=200,seed=0',
                 'target': 'linear:d=8,seed=1'},
    TRAIN: {'sigma': 1.0, 'lambda_ridge': 0.0, 'mu_p': 1.0,
            'data': 'gaussian:m=20,n=200,seed=0',
            'target': 'linear:d=8,seed=1'},
    DEMO_SPIKED: {'sigma': 1.0, 'lambda_ridge': 0.0, 'mu_p': 1.0,
                  'data': 'spiked:m=10,n=500,nu=50,seed=0',
                  'target': 'spike'},
}

# Barlow Twins needs the norm penalty to pick the least-norm minimizer.
_BARLOW_TWINS_NORM_PENALTY = 1e-4


@dataclasses.dataclass
class RunConfig(object):
    # Inputs.
    data: str = None
    target: str = None
    queries: str = None
    pca_dim: int = None
    m: int = None                # overrides for generator sources
    n: int = None
    nu: float = None
    d: int = None

    # Kernel.
    kernel: str = kernels.RBF
    sigma: float = None
    degree: int = 2
    offset: float = 0.0
    jitter: float = 0.0

    # Synthesis.
    method: str = losses.VICREG
    lambda_ridge: float = None
    mu_p: float = None
    preimage: bool = False
    clamp: list = None

    # Losses.
    vicreg_lambda: float = 5.0
    vicreg_mu: float = 5.0
    vicreg_nu: float = 1.0
    variance_mode: str = None    # None: per method
    epsilon: float = 1e-4
    bt_lambda: float = 1.0
    standard_offdiag: bool = True

    # Training.
    epochs: int = 5000
    lr: float = 1e-3
    seed: int = 0
    repeats: int = 3
    pairing: str = trainer.PAIRED
    eval_every: int = 100
    init_std: float = None
    norm_penalty: float = None
    jobs: int = 1

    out: str = 'kssl-out'

    @classmethod
    def field_names(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values, where='config'):
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise errors.ConfigError('%s: unknown keys %s'
                                     % (where, ', '.join(unknown)))
        return cls(**values)

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                values = json.load(f)
        except OSError as e:
            raise errors.IoError('Cannot read config %s: %s' % (path, e))
        except ValueError as e:
            raise errors.ConfigError('%s is not valid JSON: %s' % (path, e))
        if not isinstance(values, dict):
            raise errors.ConfigError('%s must hold a JSON object' % path)
        return cls.from_dict(values, path)

    def override(self, values):
        """A copy with the given (non-None) values replacing ours."""
        values = {k: v for (k, v) in values.items() if v is not None}
        unknown = sorted(set(values) - set(self.field_names()))
        if unknown:
            raise errors.ConfigError('Unknown settings %s'
                                     % ', '.join(unknown))
        return dataclasses.replace(self, **values)

    def for_command(self, command):
        """Fill in per-command defaults and validate."""
        if command not in COMMANDS:
            raise errors.ConfigError('Unknown command "%s"' % command)
        filled = {k: v for (k, v) in _COMMAND_DEFAULTS[command].items()
                  if getattr(self, k) is None}
        if self.norm_penalty is None:
            filled['norm_penalty'] = (_BARLOW_TWINS_NORM_PENALTY
                                      if self.method == losses.BARLOW_TWINS
                                      else 0.0)
        result = dataclasses.replace(self, **filled)
        result.validate()
        return result

    def validate(self):
        if self.method not in losses.KINDS:
            raise errors.ConfigError('Unknown method "%s", expected one of %s'
                                     % (self.method, ', '.join(losses.KINDS)))
        for (name, minimum) in (('repeats', 1), ('jobs', 1), ('epochs', 1),
                                ('eval_every', 1)):
            if getattr(self, name) < minimum:
                raise errors.ConfigError('%s must be >= %d, got %s'
                                         % (name, minimum,
                                            getattr(self, name)))
        if self.pca_dim is not None and self.pca_dim < 1:
            raise errors.ConfigError('pca_dim must be >= 1, got %s'
                                     % self.pca_dim)
        if self.clamp is not None and len(self.clamp) != 2:
            raise errors.ConfigError('clamp must be [low, high], got %s'
                                     % (self.clamp,))
        if self.jitter < 0:
            raise errors.ConfigError('jitter must be >= 0, got %s'
                                     % self.jitter)
        # These raise ConfigError on bad values.
        self.kernel_spec()
        self.loss_kind()
        self.train_config()
        self.preimage_config()

    # The typed views of this config used by the commands.

    def kernel_spec(self):
        return kernels.KernelSpec(self.kernel, sigma=self.sigma,
                                  degree=self.degree, offset=self.offset)

    def loss_kind(self):
        variance_mode = self.variance_mode or losses.VARIANCE
        return losses.LossKind.from_name(
            self.method, self.vicreg_lambda, self.vicreg_mu, self.vicreg_nu,
            variance_mode, self.epsilon, self.bt_lambda,
            self.standard_offdiag)

    def train_config(self, seed=None):
        return trainer.TrainConfig(
            loss=self.loss_kind(), epochs=self.epochs,
            learning_rate=self.lr,
            seed=self.seed if seed is None else seed,
            pairing_mode=self.pairing, eval_every=self.eval_every,
            init_std=self.init_std, norm_penalty=self.norm_penalty or 0.0)

    def preimage_config(self):
        return preimage.PreimageConfig(
            mu_p=self.mu_p if self.mu_p is not None else 1.0,
            clamp=tuple(self.clamp) if self.clamp is not None else None)

    def source_overrides(self):
        return {k: getattr(self, k) for k in ('m', 'n', 'nu', 'd')
                if getattr(self, k) is not None}

    def load_inputs(self):
        """(DataMatrix, target F, SpikedCovarianceSpec or None)."""
        overrides = self.source_overrides()
        (data, spiked) = dataio.load_data(self.data, overrides)
        F = dataio.load_target(self.target, data, spiked, self.pca_dim,
                               overrides)
        return (data, F, spiked)

    def as_dict(self):
        return dataclasses.asdict(self)
