"""The kssl logger.

Two extra levels sit between INFO and DEBUG: V1 for Gram and operator
diagnostics, V2 for solver residuals, file reads and per-evaluation
training progress.  Use log.v1(), log.v2(), log.info() etc. rather
than the logging module's own functions; the kssl logger doesn't
propagate to the root logger, so embedding apps are unaffected.
"""

import argparse
import logging
import time


V1 = logging.INFO - 1
V2 = V1 - 1
logging.addLevelName(V1, 'V1')
logging.addLevelName(V2, 'V2')

_LEVELS = {'1': V1, '2': V2, 'info': logging.INFO,
           'warning': logging.WARNING, 'error': logging.ERROR}


_KSSL_LOGGER = logging.getLogger('kssl')
if not _KSSL_LOGGER.handlers:
    #    [261017 12:54:03.640 V1] gram: rbf(sigma=1), n=200, ...
    _formatter = logging.Formatter(
        '[%(asctime)s.%(msecs)03d %(levelname)s] %(message)s',
        datefmt='%y%m%d %H:%M:%S')
    _formatter.converter = time.localtime
    _handler = logging.StreamHandler()
    _handler.setFormatter(_formatter)
    _KSSL_LOGGER.addHandler(_handler)
    _KSSL_LOGGER.setLevel(logging.INFO)
    _KSSL_LOGGER.propagate = False


def logger():
    return _KSSL_LOGGER


def set_log_level(level):
    _KSSL_LOGGER.setLevel(level)


def v1(msg, *args, **kwargs):
    _KSSL_LOGGER.log(V1, msg, *args, **kwargs)


def v2(msg, *args, **kwargs):
    _KSSL_LOGGER.log(V2, msg, *args, **kwargs)


exception = _KSSL_LOGGER.exception
error = _KSSL_LOGGER.error
warning = _KSSL_LOGGER.warning
info = _KSSL_LOGGER.info


def add_verbose_flag(arg_parser, default='info'):
    """Add --verbose/-v, which sets the kssl log level as it's parsed."""
    class VerboseAction(argparse.Action):
        def __call__(self, parser, namespace, values, option_string=None):
            set_log_level(_LEVELS[values])
            setattr(namespace, self.dest, values)

    arg_parser.add_argument(
        '--verbose', '-v', choices=sorted(_LEVELS), action=VerboseAction,
        default=default,
        help='1 and 2 log solver and training detail (default: %(default)s)')
