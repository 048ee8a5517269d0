"""The failures kssl raises.

Every failure that can come out of the library subclasses KsslFailure.
Each class has its own exit_code, which is what the commandline tool
exits with when that failure escapes a command.  (Exit code 1 is kept
for unexpected exceptions, and 2 matches argparse's usage errors.)
"""


class KsslFailure(Exception):
    exit_code = 1


class ConfigError(KsslFailure):
    """A run configuration (or a typed parameter) is invalid."""
    exit_code = 2


class ParseError(KsslFailure):
    """A matrix file could not be parsed; we never return partial reads."""
    exit_code = 3


class SingularMatrix(KsslFailure):
    """A matrix we need to invert is numerically rank-deficient.

    For the Gram matrix this means there are (near-)duplicate points.
    """
    exit_code = 4


class RankDeficientTarget(KsslFailure):
    """The target representation does not have d independent rows."""
    exit_code = 5


class NonFiniteLoss(KsslFailure):
    """Training diverged: the loss or its gradient is inf or nan."""
    exit_code = 6

    def __init__(self, message, last_good_epoch):
        # Both go in args: a Pool worker's exception is rebuilt from them.
        super(NonFiniteLoss, self).__init__(message, last_good_epoch)
        self.message = message
        self.last_good_epoch = last_good_epoch

    def __str__(self):
        return '%s (last good epoch: %s)' % (self.message,
                                             self.last_good_epoch)


class IoError(KsslFailure):
    exit_code = 7


class DimensionMismatch(KsslFailure):
    exit_code = 8


class NonSymmetric(KsslFailure):
    exit_code = 9


class GramMismatch(KsslFailure):
    """An augmentation operator is used with a Gram matrix it wasn't built on.
    """
    exit_code = 10
