"""Sub-space product quantization: codebooks, short codes and their files

A D-dimensional vector is split in M contiguous sub-vectors of dimension D/M,
each sub-space owns C centroids learned with k-means, and a vector is encoded
as the M indices of its nearest centroids. All distances are squared
Euclidean, so summing them over sub-spaces gives the global squared distance.

"""

import dataclasses
import math
import sys

import joblib
import numpy as np
import scipy.spatial

from scrreid import binary
from scrreid.exception import ConfigurationError, CorruptionError


CBK_MAGIC = b'SCRC'
CBK_LAYOUT = 'III'  # M, C, sub_dim

PQC_MAGIC = b'SCRQ'
PQC_LAYOUT = 'QII'  # N, M, C

MAX_CENTROIDS = 65536

# rows encoded at once, bounds the N x C distance block in memory
ENCODE_CHUNK = 65536


@dataclasses.dataclass(frozen=True, eq=False)
class Codebook:
    """M sub-codebooks of C centroids of dimension sub_dim

    Centroids are rounded to single precision, as stored in .cbk files, and
    kept in double precision for computations.

    """
    centroids: np.ndarray

    def __post_init__(self):
        with np.errstate(over='ignore'):
            centroids = np.array(self.centroids, dtype=np.float32).astype(
                np.float64)
        if centroids.ndim != 3 or 0 in centroids.shape:
            raise ConfigurationError(
                f'centroids must be a non-empty M x C x sub_dim array, '
                f'shape is {centroids.shape}')
        if centroids.shape[1] > MAX_CENTROIDS:
            raise ConfigurationError(
                f'C must be at most {MAX_CENTROIDS}, it is '
                f'{centroids.shape[1]}')
        if not np.all(np.isfinite(centroids)):
            raise CorruptionError('codebook has non-finite centroids')

        centroids.setflags(write=False)
        object.__setattr__(self, 'centroids', centroids)

    __hash__ = None

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return np.array_equal(self.centroids, other.centroids)

    @property
    def num_subspaces(self):
        return self.centroids.shape[0]

    @property
    def num_centroids(self):
        return self.centroids.shape[1]

    @property
    def sub_dim(self):
        return self.centroids.shape[2]

    @property
    def dim(self):
        return self.num_subspaces * self.sub_dim

    @property
    def code_bits(self):
        """Length of a short code in bits, M x log2(C) for C a power of 2"""
        return self.num_subspaces * math.ceil(math.log2(self.num_centroids))


@dataclasses.dataclass(frozen=True, eq=False)
class CodeMatrix:
    """N x M centroid indices, column m indexing sub-space m"""
    codes: np.ndarray
    num_centroids: int

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2:
            raise ConfigurationError(
                f'codes must be a 2D array, it is {codes.ndim}D')
        if codes.size and (codes.min() < 0 or codes.max() >= self.num_centroids):
            raise CorruptionError(
                f'code index out of range [0, {self.num_centroids})')

        codes = codes.astype(np.uint16)
        codes.setflags(write=False)
        object.__setattr__(self, 'codes', codes)

    __hash__ = None

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        return (
            self.num_centroids == other.num_centroids
            and np.array_equal(self.codes, other.codes))

    def __len__(self):
        return self.codes.shape[0]

    @property
    def num_subspaces(self):
        return self.codes.shape[1]

    def subset(self, indices):
        return CodeMatrix(self.codes[indices], self.num_centroids)


@dataclasses.dataclass
class KMeansReport:
    """Observability of a codebook training

    `traces[m]` is the quantization error of sub-space m before the first
    update and after each Lloyd iteration.

    """
    iterations_run: int
    per_subspace_error: np.ndarray
    traces: list
    num_centroids: int
    warnings: list = dataclasses.field(default_factory=list)
    total_quantization_error: float = dataclasses.field(init=False)

    def __post_init__(self):
        self.per_subspace_error = np.asarray(
            self.per_subspace_error, dtype=np.float64)
        self.total_quantization_error = float(self.per_subspace_error.sum())

    @property
    def initial_error(self):
        """Total error of the initial centroids, before any update"""
        return float(sum(trace[0] for trace in self.traces))

    @property
    def total_trace(self):
        """Total error per iteration, finished sub-spaces keep their error"""
        length = max(len(t) for t in self.traces)
        return np.sum(
            [np.pad(t, (0, length - len(t)), mode='edge')
             for t in self.traces], axis=0)


def _as_matrix(features):
    """Returns the vectors of a FeatureSet (or an array) as float64"""
    return np.asarray(getattr(features, 'vectors', features), dtype=np.float64)


def split_subspaces(features, num_subspaces):
    """Returns the M sub-matrices of shape N x D/M of `features`

    Sub-matrix m holds the coordinates [m D/M, (m+1) D/M).

    Raises
    ------
    ConfigurationError
        If M is not a positive divisor of D.

    """
    vectors = _as_matrix(features)
    dim = vectors.shape[1]
    if num_subspaces < 1 or dim % num_subspaces:
        raise ConfigurationError(
            f'M={num_subspaces} does not divide the dimension D={dim}')

    return np.split(vectors, num_subspaces, axis=1)


def _squared_distances(points, centroids):
    return scipy.spatial.distance.cdist(points, centroids, 'sqeuclidean')


def kmeans_plusplus(points, num_centroids, rng):
    """Returns `num_centroids` rows of `points` chosen by k-means++ seeding"""
    size = points.shape[0]
    chosen = [rng.integers(size)]
    closest = _squared_distances(points, points[chosen])[:, 0]

    for _ in range(1, num_centroids):
        total = closest.sum()
        if total > 0:
            index = rng.choice(size, p=closest / total)
        else:
            # every point is already a centroid
            index = rng.integers(size)
        chosen.append(index)
        closest = np.minimum(
            closest, _squared_distances(points, points[[index]])[:, 0])

    return points[chosen].copy()


def _assign(points, centroids):
    distances = _squared_distances(points, centroids)
    labels = np.argmin(distances, axis=1)
    return labels, distances[np.arange(points.shape[0]), labels]


def _update(points, labels, nearest, centroids):
    """Returns the means of the clusters, empty ones moved to far points"""
    num_centroids, sub_dim = centroids.shape
    counts = np.bincount(labels, minlength=num_centroids)
    sums = np.zeros((num_centroids, sub_dim))
    np.add.at(sums, labels, points)

    updated = centroids.copy()
    filled = counts > 0
    updated[filled] = sums[filled] / counts[filled, None]

    empty = np.flatnonzero(~filled)
    if empty.size:
        farthest = np.argsort(-nearest, kind='stable')[:empty.size]
        updated[empty] = points[farthest]
    return updated


def _lloyd(points, centroids, max_iters, tol):
    """Lloyd iterations from `centroids`, returns (centroids, trace)"""
    labels, nearest = _assign(points, centroids)
    trace = [nearest.sum()]

    for _ in range(max_iters):
        centroids = _update(points, labels, nearest, centroids)
        labels, nearest = _assign(points, centroids)
        trace.append(nearest.sum())

        previous, error = trace[-2], trace[-1]
        if previous - error <= tol * previous:
            break

    return centroids, np.asarray(trace)


def _train_subspace(points, num_centroids, max_iters, tol, init, seed):
    if init is None:
        init = kmeans_plusplus(
            points, num_centroids, np.random.default_rng(seed))
    return _lloyd(points, init, max_iters, tol)


def train_codebook(
        features, num_subspaces, num_centroids, max_iters=25, tol=1e-4,
        warm_start=None, rng_seed=0, njobs=1, verbose=False):
    """Learns a codebook with k-means run independently on each sub-space

    Parameters
    ----------
    features : FeatureSet or numpy.ndarray
        The N x D training vectors.
    num_subspaces : int
        M, must divide D.
    num_centroids : int
        C, clamped to the minimal number of distinct sub-vectors over the
        sub-spaces when larger (a warning is recorded). When `warm_start` is
        given it must equal its number of centroids.
    max_iters : int
        Maximal number of Lloyd iterations.
    tol : float
        Stop when the relative error improvement of an iteration is below it.
    warm_start : Codebook, optional
        Initial centroids, k-means++ seeding is used when not given.
    rng_seed : int
        Seed of the k-means++ seeding.
    njobs : int
        Number of sub-spaces trained in parallel.

    Returns
    -------
    codebook : Codebook
    report : KMeansReport

    Raises
    ------
    ConfigurationError
        If M, C or `max_iters` are not valid or if `warm_start` does not fit.

    """
    if num_centroids < 1 or num_centroids > MAX_CENTROIDS:
        raise ConfigurationError(
            f'C must be in [1, {MAX_CENTROIDS}], it is {num_centroids}')
    if max_iters < 1:
        raise ConfigurationError(
            f'max_iters must be at least 1, it is {max_iters}')

    subspaces = split_subspaces(features, num_subspaces)
    warnings = []

    if warm_start is not None:
        if (warm_start.num_subspaces != num_subspaces
                or warm_start.sub_dim != subspaces[0].shape[1]):
            raise ConfigurationError(
                f'warm start codebook is {warm_start.num_subspaces} x '
                f'{warm_start.sub_dim}, expected {num_subspaces} x '
                f'{subspaces[0].shape[1]}')
        if warm_start.num_centroids != num_centroids:
            raise ConfigurationError(
                f'warm start codebook has C={warm_start.num_centroids}, '
                f'expected {num_centroids}')

    distinct = min(np.unique(s, axis=0).shape[0] for s in subspaces)
    if distinct < num_centroids:
        warnings.append(
            f'C clamped from {num_centroids} to {distinct}, the number of '
            f'distinct sub-vectors')
        print(f'WARNING: {warnings[-1]}', file=sys.stderr)
        num_centroids = distinct

    inits = [None] * num_subspaces
    if warm_start is not None:
        inits = [c[:num_centroids] for c in warm_start.centroids]

    seeds = np.random.SeedSequence(rng_seed).generate_state(num_subspaces)
    results = joblib.Parallel(n_jobs=njobs)(
        joblib.delayed(_train_subspace)(
            points, num_centroids, max_iters, tol, init, seed)
        for points, init, seed in zip(subspaces, inits, seeds))
    centroids, traces = zip(*results)

    report = KMeansReport(
        iterations_run=max(len(t) - 1 for t in traces),
        per_subspace_error=[t[-1] for t in traces],
        traces=list(traces),
        num_centroids=num_centroids,
        warnings=warnings)

    if verbose:
        print(
            f'  > k-means M={num_subspaces} C={num_centroids}: '
            f'{report.iterations_run} iterations, '
            f'error {report.total_quantization_error:.4f}')

    return Codebook(np.stack(centroids)), report


def _check_dim(vectors, codebook):
    if vectors.shape[1] != codebook.dim:
        raise ConfigurationError(
            f'vectors have dimension {vectors.shape[1]}, codebook expects '
            f'{codebook.num_subspaces} x {codebook.sub_dim} = {codebook.dim}')


def encode(features, codebook):
    """Returns the CodeMatrix of the nearest centroid per sub-space

    Ties between equidistant centroids go to the lowest index.

    Raises
    ------
    ConfigurationError
        If the dimension of `features` does not match the codebook.

    """
    vectors = _as_matrix(features)
    _check_dim(vectors, codebook)

    codes = np.empty((vectors.shape[0], codebook.num_subspaces), np.uint16)
    for m, points in enumerate(
            split_subspaces(vectors, codebook.num_subspaces)):
        for start in range(0, points.shape[0], ENCODE_CHUNK):
            chunk = points[start:start + ENCODE_CHUNK]
            codes[start:start + ENCODE_CHUNK, m] = np.argmin(
                _squared_distances(chunk, codebook.centroids[m]), axis=1)

    return CodeMatrix(codes, codebook.num_centroids)


def check_codes(codes, codebook):
    if codes.num_subspaces != codebook.num_subspaces:
        raise ConfigurationError(
            f'codes have M={codes.num_subspaces}, codebook has '
            f'M={codebook.num_subspaces}')
    if codes.codes.size and codes.codes.max() >= codebook.num_centroids:
        raise CorruptionError(
            f'code index {codes.codes.max()} out of range for '
            f'C={codebook.num_centroids}')


def reconstruct(codes, codebook):
    """Returns the N x D vectors concatenating the coded centroids

    Raises
    ------
    CorruptionError
        If an index is out of range for the codebook.

    """
    check_codes(codes, codebook)
    return np.concatenate(
        [codebook.centroids[m][codes.codes[:, m]]
         for m in range(codebook.num_subspaces)], axis=1)


def quantization_error(features, codebook):
    """Summed squared distance of `features` to their reconstruction"""
    vectors = _as_matrix(features)
    restored = reconstruct(encode(vectors, codebook), codebook)
    return float(((vectors - restored) ** 2).sum())


def save_codebook(codebook, path):
    binary.write_artifact(
        path, CBK_MAGIC, CBK_LAYOUT,
        (codebook.num_subspaces, codebook.num_centroids, codebook.sub_dim),
        [(codebook.centroids, '<f4')])


def load_codebook(path):
    reader = binary.Reader(path)
    num_subspaces, num_centroids, sub_dim = reader.header(
        CBK_MAGIC, CBK_LAYOUT)
    start = reader.offset
    centroids = reader.array(
        '<f4', num_subspaces * num_centroids * sub_dim, 'centroids')
    reader.finish()
    reader.finite(centroids, start, 'centroids')

    return Codebook(
        centroids.reshape(num_subspaces, num_centroids, sub_dim))


def save_codes(codes, path):
    binary.write_artifact(
        path, PQC_MAGIC, PQC_LAYOUT,
        (len(codes), codes.num_subspaces, codes.num_centroids),
        [(codes.codes, '<u2')])


def load_codes(path):
    reader = binary.Reader(path)
    size, num_subspaces, num_centroids = reader.header(PQC_MAGIC, PQC_LAYOUT)
    codes = reader.array('<u2', size * num_subspaces, 'codes')
    reader.finish()

    return CodeMatrix(codes.reshape(size, num_subspaces), num_centroids)
