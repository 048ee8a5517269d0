"""Reading, writing and generating data matrices and targets.

Two on-disk formats are supported, picked by file extension:

-- CSV (.csv): one row per line, comma-separated decimal floats.  A
   single header line is allowed and auto-detected (it is the header
   if any of its fields fails to parse as a float).  We write floats
   with repr(), which round-trips exactly.

-- MAT64 (.mat64): the 4 bytes "KSSL", then the row and column counts
   as little-endian u32, then rows*cols little-endian f64 in row-major
   order.  Nothing else: a file whose length disagrees with its header
   is rejected rather than partially read.

Data and target *files* hold one point per row, as every other tool
expects.  In memory we use the transpose: a DataMatrix is m x n and a
target is d x n, column j belonging to point j.

Sources are given as strings (see load_data() and load_target()):
either a file path, or a generator spec like "spiked:m=10,n=500,nu=50".
"""

import csv
import dataclasses
import io
import os
import struct

import numpy as np
import sklearn.decomposition

from . import errors
from . import log
from . import matrixkit


CSV = 'csv'
MAT64 = 'mat64'
FORMATS = (CSV, MAT64)

MAT64_MAGIC = b'KSSL'
_MAT64_HEADER = struct.Struct('<4sII')

TRACE_COLUMNS = ('epoch', 'loss', 'procrustes_to_target',
                 'procrustes_random_baseline')


@dataclasses.dataclass(frozen=True, eq=False)
class DataMatrix(object):
    """n points in R^m, stored m x n (column j is x_j)."""
    values: np.ndarray
    feature_labels: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise errors.DimensionMismatch(
                'A data matrix must be 2-dimensional, got shape %s'
                % (values.shape,))
        if not np.all(np.isfinite(values)):
            raise errors.ParseError('Data matrix has non-finite entries')
        if (self.feature_labels is not None and
                len(self.feature_labels) != values.shape[0]):
            raise errors.DimensionMismatch(
                '%d feature labels for %d features'
                % (len(self.feature_labels), values.shape[0]))
        object.__setattr__(self, 'values', values)

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


def format_for_path(path):
    extension = os.path.splitext(path)[1].lower().lstrip('.')
    if extension not in FORMATS:
        raise errors.ConfigError(
            'Cannot tell the format of "%s"; use a .csv or .mat64 file'
            % path)
    return extension


# --- matrices --------------------------------------------------------------

def _is_number(field):
    try:
        float(field)
        return True
    except ValueError:
        return False


def _parse_csv(text, path):
    rows = [row for row in csv.reader(io.StringIO(text))
            if row and any(field.strip() for field in row)]
    if not rows:
        raise errors.ParseError('%s: no data' % path)

    header = None
    if not all(_is_number(field) for field in rows[0]):
        header = tuple(field.strip() for field in rows[0])
        rows = rows[1:]
        if not rows:
            raise errors.ParseError('%s: header but no data' % path)

    width = len(rows[0])
    values = []
    for (lineno, row) in enumerate(rows, 2 if header else 1):
        if len(row) != width:
            raise errors.ParseError('%s:%d: expected %d fields, got %d'
                                    % (path, lineno, width, len(row)))
        try:
            values.append([float(field) for field in row])
        except ValueError as e:
            raise errors.ParseError('%s:%d: %s' % (path, lineno, e))
    if header is not None and len(header) != width:
        raise errors.ParseError('%s: header has %d fields, data has %d'
                                % (path, len(header), width))
    return (np.array(values, dtype=np.float64), header)


def _parse_mat64(data, path):
    if len(data) < _MAT64_HEADER.size:
        raise errors.ParseError('%s: too short for a MAT64 header' % path)
    (magic, rows, cols) = _MAT64_HEADER.unpack_from(data)
    if magic != MAT64_MAGIC:
        raise errors.ParseError('%s: bad magic %r' % (path, magic))
    expected = _MAT64_HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise errors.ParseError(
            '%s: header says %d x %d (%d bytes) but the file has %d bytes'
            % (path, rows, cols, expected, len(data)))
    values = np.frombuffer(data, dtype='<f8', offset=_MAT64_HEADER.size)
    return values.reshape((rows, cols)).astype(np.float64)


def _read_bytes(path):
    try:
        with open(path, 'rb') as f:
            return f.read()
    except OSError as e:
        raise errors.IoError('Cannot read %s: %s' % (path, e))


def _write_bytes(path, data):
    try:
        with open(path, 'wb') as f:
            f.write(data)
    except OSError as e:
        raise errors.IoError('Cannot write %s: %s' % (path, e))


def _read_with_header(path, fmt=None):
    fmt = fmt or format_for_path(path)
    data = _read_bytes(path)
    if fmt == MAT64:
        return (_parse_mat64(data, path), None)
    try:
        text = data.decode('utf-8')
    except UnicodeDecodeError as e:
        raise errors.ParseError('%s: not a text file (%s)' % (path, e))
    return _parse_csv(text, path)


def read_matrix(path, fmt=None):
    """The matrix stored in path, exactly as laid out in the file."""
    (values, _) = _read_with_header(path, fmt)
    log.v2('Read %d x %d matrix from %s', values.shape[0], values.shape[1],
           path)
    return values


def write_matrix(matrix, path, fmt=None, header=None):
    fmt = fmt or format_for_path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if fmt == MAT64:
        (rows, cols) = matrix.shape
        data = (_MAT64_HEADER.pack(MAT64_MAGIC, rows, cols) +
                np.ascontiguousarray(matrix, dtype='<f8').tobytes())
    else:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        if header is not None:
            writer.writerow(header)
        for row in matrix:
            writer.writerow([repr(float(value)) for value in row])
        data = out.getvalue().encode('utf-8')
    _write_bytes(path, data)
    log.v2('Wrote %d x %d matrix to %s', matrix.shape[0], matrix.shape[1],
           path)


def read_points(path, fmt=None):
    """A DataMatrix from a file with one point per row."""
    (values, header) = _read_with_header(path, fmt)
    return DataMatrix(values.T, header)


def write_points(data, path, fmt=None):
    fmt = fmt or format_for_path(path)
    header = data.feature_labels if fmt == CSV else None
    write_matrix(data.values.T, path, fmt, header)


# --- generators ------------------------------------------------------------

def random_unit_vector(m, rng):
    v = rng.standard_normal(m)
    return v / np.linalg.norm(v)


@dataclasses.dataclass(frozen=True, eq=False)
class SpikedCovarianceSpec(object):
    """n draws from N(0, nu theta theta^T + I_m)."""
    m: int
    nu: float
    theta: np.ndarray
    n: int
    seed: int = 0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64).ravel()
        if self.m < 1 or self.n < 1:
            raise errors.ConfigError('Spiked model needs m, n >= 1')
        if theta.shape != (self.m,):
            raise errors.DimensionMismatch(
                'theta has %d entries but m = %d' % (theta.size, self.m))
        if abs(np.linalg.norm(theta) - 1.0) > 1e-10:
            raise errors.ConfigError('theta must be a unit vector (norm %r)'
                                     % np.linalg.norm(theta))
        if self.nu < 0:
            raise errors.ConfigError('Spike strength nu must be >= 0, got %s'
                                     % self.nu)
        object.__setattr__(self, 'theta', theta)

    @classmethod
    def with_random_direction(cls, m, nu, n, seed=0):
        """theta is drawn uniformly from the sphere, from its own stream."""
        rng = np.random.default_rng([seed, 1])
        return cls(m, nu, random_unit_vector(m, rng), n, seed)


def gen_spiked(spec):
    """x = g + sqrt(nu) s theta, g ~ N(0, I_m), s ~ N(0, 1)."""
    rng = np.random.default_rng(spec.seed)
    noise = rng.standard_normal((spec.m, spec.n))
    signal = rng.standard_normal(spec.n)
    values = noise + np.sqrt(spec.nu) * np.outer(spec.theta, signal)
    log.v1('Generated %d spiked-covariance points in R^%d (nu=%g)',
           spec.n, spec.m, spec.nu)
    return DataMatrix(values)


def gen_gaussian(m, n, seed=0):
    """n standard normal points in R^m."""
    rng = np.random.default_rng(seed)
    return DataMatrix(rng.standard_normal((m, n)))


@dataclasses.dataclass(frozen=True)
class RandomLinearTarget(object):
    """F = G X with G a d x m standard normal matrix."""
    d: int
    seed: int = 1


@dataclasses.dataclass(frozen=True, eq=False)
class SpikeProjectionTarget(object):
    """F = theta^T X, the projection onto the signal direction."""
    theta: np.ndarray


def check_target_rank(F, rank_tol=matrixkit.RANK_TOL):
    """Raise RankDeficientTarget unless cov(F) has full rank d."""
    F = np.asarray(F, dtype=np.float64)
    rank = matrixkit.matrix_rank(matrixkit.sample_covariance(F), rank_tol)
    if rank < F.shape[0]:
        raise errors.RankDeficientTarget(
            'Target covariance has rank %d < d = %d' % (rank, F.shape[0]))


def gen_target(kind, X):
    """The d x n target representation of the points X."""
    values = getattr(X, 'values', X)
    if isinstance(kind, RandomLinearTarget):
        rng = np.random.default_rng(kind.seed)
        G = rng.standard_normal((kind.d, values.shape[0]))
        F = G @ values
    elif isinstance(kind, SpikeProjectionTarget):
        theta = np.asarray(kind.theta, dtype=np.float64).ravel()
        if theta.shape[0] != values.shape[0]:
            raise errors.DimensionMismatch(
                'theta has %d entries but points are in R^%d'
                % (theta.shape[0], values.shape[0]))
        F = theta[None, :] @ values
    else:
        raise errors.ConfigError('Unknown target kind %r' % (kind,))
    check_target_rank(F)
    return F


def pca_reduce(F, d):
    """Project the d' x n target onto its top-d principal components."""
    F = np.asarray(F, dtype=np.float64)
    if not 1 <= d <= min(F.shape):
        raise errors.ConfigError(
            'Cannot PCA-reduce a %d x %d target to %d dimensions'
            % (F.shape[0], F.shape[1], d))
    pca = sklearn.decomposition.PCA(n_components=d, svd_solver='full')
    reduced = pca.fit_transform(F.T).T
    log.v1('PCA-reduced target from %d to %d dimensions (%.1f%% variance)',
           F.shape[0], d, 100.0 * np.sum(pca.explained_variance_ratio_))
    return reduced


# --- training traces -------------------------------------------------------

def write_trace(records, path):
    """Write (epoch, loss, to-target, to-baseline) rows as CSV."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\n')
    writer.writerow(TRACE_COLUMNS)
    for record in records:
        writer.writerow([str(int(record[0]))] +
                        [repr(float(value)) for value in record[1:]])
    _write_bytes(path, out.getvalue().encode('utf-8'))


def read_trace(path):
    (values, header) = _read_with_header(path, CSV)
    if header != TRACE_COLUMNS:
        raise errors.ParseError('%s: not a trace file (header %s)'
                                % (path, header))
    return [(int(row[0]),) + tuple(float(v) for v in row[1:])
            for row in values]


# --- sources ---------------------------------------------------------------

DATA_GENERATORS = {
    'gaussian': {'m': 20, 'n': 200, 'seed': 0},
    'spiked': {'m': 10, 'n': 500, 'nu': 50.0, 'seed': 0},
}
TARGET_GENERATORS = {
    'linear': {'d': 8, 'seed': 1},
    'spike': {},
}


def _parse_value(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise errors.ConfigError('Bad generator parameter value "%s"' % text)


def parse_generator(source, generators, overrides=None):
    """'name:k=v,...' -> (name, params), or None if source is a path.

    overrides (e.g. from --m, --n) replace parameters the generator
    knows about and are ignored otherwise.
    """
    (name, _, rest) = source.partition(':')
    if name not in generators:
        return None
    params = dict(generators[name])
    for item in filter(None, (part.strip() for part in rest.split(','))):
        (key, equals, value) = item.partition('=')
        key = key.strip()
        if not equals or key not in params:
            raise errors.ConfigError(
                'Bad parameter "%s" for generator "%s"; known: %s'
                % (item, name, ', '.join(sorted(params)) or '(none)'))
        params[key] = _parse_value(value.strip())
    for (key, value) in (overrides or {}).items():
        if key in params:
            params[key] = value
    return (name, params)


def load_data(source, overrides=None):
    """(DataMatrix, SpikedCovarianceSpec or None) for a data source."""
    generator = parse_generator(source, DATA_GENERATORS, overrides)
    if generator is None:
        return (read_points(source), None)
    (name, params) = generator
    if name == 'gaussian':
        return (gen_gaussian(params['m'], params['n'], params['seed']), None)
    spec = SpikedCovarianceSpec.with_random_direction(
        params['m'], float(params['nu']), params['n'], params['seed'])
    return (gen_spiked(spec), spec)


def load_target(source, data, spiked=None, pca_dim=None, overrides=None):
    """The d x n target for data, from a file or a generator spec."""
    generator = parse_generator(source, TARGET_GENERATORS, overrides)
    if generator is None:
        F = read_matrix(source).T
        if not np.all(np.isfinite(F)):
            raise errors.ParseError('%s: target has non-finite entries'
                                    % source)
        if F.shape[1] != data.n:
            raise errors.DimensionMismatch(
                'Target file %s has %d points but the data has %d'
                % (source, F.shape[1], data.n))
    elif generator[0] == 'linear':
        F = gen_target(RandomLinearTarget(generator[1]['d'],
                                          generator[1]['seed']), data)
    else:
        if spiked is None:
            raise errors.ConfigError(
                'The "spike" target needs spiked data (--data spiked:...)')
        F = gen_target(SpikeProjectionTarget(spiked.theta), data)
    if pca_dim:
        F = pca_reduce(F, pca_dim)
    if generator is None or pca_dim:
        check_target_rank(F)
    return F
