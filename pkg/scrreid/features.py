"""Feature store: labeled embedding sets, their .fvs format and synthesis"""

import dataclasses
import math

import numpy as np

from scrreid import binary
from scrreid.exception import (
    ArgumentError, ConfigurationError, ProtocolError, ValidationError)


FVS_MAGIC = b'SCRF'

# header after magic and version: N as u64, D as u32
FVS_LAYOUT = 'QI'

LABEL_DTYPE = np.dtype([('person_id', '<u4'), ('camera_id', '<u2')])


def _readonly(array, dtype):
    array = np.array(array, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclasses.dataclass(frozen=True, eq=False)
class FeatureSet:
    """N embedding vectors of dimension D with identity and camera labels

    The set is immutable: arrays are copied at construction and flagged
    read-only.

    """
    vectors: np.ndarray
    person_ids: np.ndarray
    camera_ids: np.ndarray

    def __post_init__(self):
        with np.errstate(over='ignore'):
            vectors = np.asarray(self.vectors).astype(np.float32)
        if vectors.ndim != 2:
            raise ValidationError(
                f'vectors must be a 2D array, it is {vectors.ndim}D')
        if vectors.shape[0] < 1 or vectors.shape[1] < 1:
            raise ValidationError(
                f'vectors must be at least 1x1, it is {vectors.shape}')
        if not np.all(np.isfinite(vectors)):
            raise ValidationError(
                'vectors contain non-finite values in single precision')

        for name in ('person_ids', 'camera_ids'):
            labels = np.asarray(getattr(self, name))
            if labels.shape != (vectors.shape[0],):
                raise ValidationError(
                    f'{name} must have length {vectors.shape[0]}, '
                    f'it has shape {labels.shape}')
            if labels.size and labels.min() < 0:
                raise ValidationError(f'{name} must be non-negative')

        object.__setattr__(self, 'vectors', _readonly(vectors, np.float32))
        object.__setattr__(
            self, 'person_ids', _readonly(self.person_ids, np.int64))
        object.__setattr__(
            self, 'camera_ids', _readonly(self.camera_ids, np.int64))

    __hash__ = None

    def __eq__(self, other):
        if not isinstance(other, FeatureSet):
            return NotImplemented
        return (
            np.array_equal(self.vectors, other.vectors)
            and np.array_equal(self.person_ids, other.person_ids)
            and np.array_equal(self.camera_ids, other.camera_ids))

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def size(self):
        return self.vectors.shape[0]

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def identities(self):
        """The sorted distinct person ids"""
        return np.unique(self.person_ids)

    @property
    def num_identities(self):
        return self.identities.size

    def subset(self, indices):
        """Returns the rows at `indices` as a new FeatureSet"""
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureSet(
            self.vectors[indices],
            self.person_ids[indices],
            self.camera_ids[indices])

    def with_vectors(self, vectors):
        """Returns a set with the same labels and new `vectors`"""
        return FeatureSet(vectors, self.person_ids, self.camera_ids)

    @classmethod
    def concat(cls, *sets):
        return cls(
            np.concatenate([s.vectors for s in sets]),
            np.concatenate([s.person_ids for s in sets]),
            np.concatenate([s.camera_ids for s in sets]))


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic clustered embedding set"""
    num_identities: int
    instances_per_identity: int
    dim: int
    cluster_stddev: float = 1.0
    identity_separation: float = 20.0
    num_cameras: int = 2
    rng_seed: int = 0

    def validate(self):
        for name in ('num_identities', 'instances_per_identity', 'dim'):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(
                    f'{name} must be a positive integer, it is {value}')

        for name in ('cluster_stddev', 'identity_separation'):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(
                    f'{name} must be a positive real, it is {value}')

        if self.num_cameras < 2:
            raise ValidationError(
                f'num_cameras must be at least 2, it is {self.num_cameras}')

        if self.num_cameras > 0xffff:
            raise ValidationError(
                f'num_cameras must fit 16 bits, it is {self.num_cameras}')


def generate_synthetic(spec):
    """Returns a clustered FeatureSet drawn from `spec`

    Each identity has a mean drawn uniformly in a hypercube of side
    `identity_separation` centered on the origin, its instances are the mean
    plus isotropic Gaussian noise of standard deviation `cluster_stddev`.
    Cameras are assigned round-robin over the instances of each identity.

    Raises
    ------
    ValidationError
        If `spec` is not valid, the message names the faulty field.

    """
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)

    half = spec.identity_separation / 2
    means = rng.uniform(-half, half, size=(spec.num_identities, spec.dim))
    noise = rng.normal(
        0, spec.cluster_stddev,
        size=(spec.num_identities, spec.instances_per_identity, spec.dim))

    vectors = (means[:, None, :] + noise).reshape(-1, spec.dim)
    person_ids = np.repeat(
        np.arange(spec.num_identities), spec.instances_per_identity)
    camera_ids = np.tile(
        np.arange(spec.instances_per_identity) % spec.num_cameras,
        spec.num_identities)

    return FeatureSet(vectors, person_ids, camera_ids)


def add_distractors(gallery, count, rng_seed=0, spread=None):
    """Returns `gallery` extended with `count` distractor vectors

    Distractors get fresh person ids (never shared with any existing row), so
    they can only lower the accuracy of a query. They are drawn uniformly in
    the hypercube enclosing the gallery, or in [-spread/2, spread/2]^D when
    `spread` is given.

    """
    if count < 0:
        raise ArgumentError(f'count must be non-negative, it is {count}')
    if count == 0:
        return gallery

    rng = np.random.default_rng(rng_seed)
    if spread is None:
        low = gallery.vectors.min(axis=0)
        high = gallery.vectors.max(axis=0)
    else:
        low = np.full(gallery.dim, -spread / 2)
        high = np.full(gallery.dim, spread / 2)

    first = int(gallery.person_ids.max()) + 1
    distractors = FeatureSet(
        rng.uniform(low, high, size=(count, gallery.dim)),
        np.arange(first, first + count),
        rng.integers(0, int(gallery.camera_ids.max()) + 1, size=count))

    return FeatureSet.concat(gallery, distractors)


def l2_normalize(features):
    """Returns `features` with every vector scaled to unit L2 norm

    Zero vectors are left unchanged.

    """
    vectors = features.vectors.astype(np.float64)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    norms[norms == 0] = 1
    return features.with_vectors(vectors / norms)


def split_query_gallery(features, query_fraction, rng_seed=0):
    """Splits `features` into disjoint (query, gallery) sets by identity

    For each identity with n instances, ceil(query_fraction * n) instances
    (capped at n - 1) go to the query set, the others to the gallery. Rows
    keep their original relative order in both sets.

    Raises
    ------
    ArgumentError
        If `query_fraction` is not in (0, 1).
    ProtocolError
        If some identities have a single instance, they are listed.

    """
    if not 0 < query_fraction < 1:
        raise ArgumentError(
            f'query_fraction must be in (0, 1), it is {query_fraction}')

    identities, counts = np.unique(features.person_ids, return_counts=True)
    singles = identities[counts < 2]
    if singles.size:
        raise ProtocolError(
            'identities with a single instance cannot be split',
            singles.tolist())

    rng = np.random.default_rng(rng_seed)
    query = []
    for identity, count in zip(identities, counts):
        rows = rng.permutation(np.flatnonzero(features.person_ids == identity))
        num_query = min(math.ceil(query_fraction * count), count - 1)
        query.append(rows[:num_query])

    is_query = np.zeros(features.size, dtype=bool)
    is_query[np.concatenate(query)] = True

    return (
        features.subset(np.flatnonzero(is_query)),
        features.subset(np.flatnonzero(~is_query)))


def save_features(features, path):
    """Writes `features` to `path` in .fvs format, overwrites existing file

    Layout (little-endian): magic "SCRF", version u32, N u64, D u32, then N
    records (person_id u32, camera_id u16), then N x D float32 row-major.

    Raises
    ------
    ValidationError
        If a label does not fit its record field.
    OSError
        If the file cannot be written.

    """
    if features.person_ids.max() > 0xffffffff:
        raise ValidationError('person ids must fit 32 bits')
    if features.camera_ids.max() > 0xffff:
        raise ValidationError('camera ids must fit 16 bits')

    labels = np.empty(features.size, dtype=LABEL_DTYPE)
    labels['person_id'] = features.person_ids
    labels['camera_id'] = features.camera_ids

    binary.write_artifact(
        path, FVS_MAGIC, FVS_LAYOUT, (features.size, features.dim),
        [(labels, LABEL_DTYPE), (features.vectors, '<f4')])


def load_features(path):
    """Returns the FeatureSet stored in the .fvs file `path`

    Raises
    ------
    FormatError
        On bad magic, bad version, truncated payload, trailing bytes or
        non-finite values; the message holds the byte offset.
    OSError
        If the file cannot be read.

    """
    reader = binary.Reader(path)
    size, dim = reader.header(FVS_MAGIC, FVS_LAYOUT)
    if size < 1 or dim < 1:
        raise ConfigurationError(
            f'{path} declares an empty set (N={size}, D={dim})')

    labels = reader.array(LABEL_DTYPE, size, 'label records')
    start = reader.offset
    vectors = reader.array('<f4', size * dim, 'vectors')
    reader.finish()
    reader.finite(vectors, start, 'vectors')

    return FeatureSet(
        vectors.reshape(size, dim),
        labels['person_id'].astype(np.int64),
        labels['camera_id'].astype(np.int64))
