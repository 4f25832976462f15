"""Distance engine: exact sub-space matrices, centroid look-up tables and rows

Four kinds of query to gallery distances are computed here:

* euclidean: exact squared Euclidean distance on the raw vectors,
* scr: sum over sub-spaces of the real centroid-to-centroid table entries
  indexed by the two short codes,
* int_scr: the same sum over the 8-bit quantized table, bounded by 255 x M,
* hamming: popcount of the XOR of sign-binarized codes.

"""

import dataclasses
from enum import Enum

import numpy as np
import scipy.spatial

from scrreid import binary
from scrreid.exception import ConfigurationError, CorruptionError, FormatError
from scrreid.quantizer import split_subspaces


DistanceKind = Enum('DistanceKind', 'euclidean scr int_scr hamming')

LUT_MAGIC = b'SCRL'

# kind byte, M and C
LUT_LAYOUT = 'BII'

INT_MAX_ENTRY = 255

# bit count of every byte value
_POPCOUNT = np.unpackbits(
    np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1)


@dataclasses.dataclass(frozen=True, eq=False)
class DistanceLUT:
    """M x C x C squared distances between the centroids of each sub-space"""
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=np.float64)
        if table.ndim != 3 or table.shape[1] != table.shape[2]:
            raise ConfigurationError(
                f'table must be M x C x C, shape is {table.shape}')
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @property
    def num_subspaces(self):
        return self.table.shape[0]

    @property
    def num_centroids(self):
        return self.table.shape[1]

    @property
    def kind(self):
        return DistanceKind.scr

    def entries(self):
        """The table in the units of the exact squared distances"""
        return self.table


@dataclasses.dataclass(frozen=True, eq=False)
class IntLUT:
    """8-bit quantized DistanceLUT, entry = round(scale x real entry)"""
    table: np.ndarray
    scale: float
    bits_per_entry: int = 8

    def __post_init__(self):
        table = np.asarray(self.table)
        if table.ndim != 3 or table.shape[1] != table.shape[2]:
            raise ConfigurationError(
                f'table must be M x C x C, shape is {table.shape}')
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise CorruptionError(f'scale must be positive, it is {self.scale}')
        if table.size and not (
                np.all(np.isfinite(table))
                and table.min() >= 0 and table.max() <= INT_MAX_ENTRY):
            raise CorruptionError(
                f'table entries must be in [0, {INT_MAX_ENTRY}]')

        table = table.astype(np.uint8)
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    @property
    def num_subspaces(self):
        return self.table.shape[0]

    @property
    def num_centroids(self):
        return self.table.shape[1]

    @property
    def kind(self):
        return DistanceKind.int_scr

    @property
    def max_distance(self):
        """Upper bound of any code-pair distance"""
        return INT_MAX_ENTRY * self.num_subspaces

    def entries(self):
        """The table descaled by 1 / scale to real squared distances"""
        return self.table / self.scale


@dataclasses.dataclass(frozen=True, eq=False)
class DistanceRow:
    """Distances from one query to every gallery item"""
    query_index: int
    distances: np.ndarray
    kind: DistanceKind
    max_value: int = None

    def __len__(self):
        return self.distances.shape[0]

    @property
    def is_integer(self):
        return self.kind in (DistanceKind.int_scr, DistanceKind.hamming)


def euclidean_matrix(a, b, num_subspaces):
    """Returns the M x Na x Nb per-sub-space squared Euclidean distances

    Summing over the first axis gives the global squared distances between
    the rows of `a` and `b`.

    Raises
    ------
    ConfigurationError
        If `a` and `b` dimensions differ or M does not divide them.

    """
    sub_a = split_subspaces(a, num_subspaces)
    sub_b = split_subspaces(b, num_subspaces)
    if sub_a[0].shape[1] != sub_b[0].shape[1]:
        raise ConfigurationError(
            f'dimension mismatch: {sub_a[0].shape[1] * num_subspaces} '
            f'!= {sub_b[0].shape[1] * num_subspaces}')

    return np.stack([
        scipy.spatial.distance.cdist(x, y, 'sqeuclidean')
        for x, y in zip(sub_a, sub_b)])


def build_lut(codebook):
    """Returns the DistanceLUT of all pairwise centroid squared distances"""
    return DistanceLUT(np.stack([
        scipy.spatial.distance.cdist(c, c, 'sqeuclidean')
        for c in codebook.centroids]))


def quantize_lut(lut):
    """Returns the 8-bit IntLUT of `lut` under one global affine scale

    scale = 255 / max entry (1 when the table is all zeros) and entries are
    rounded half away from zero, so the maximal entry maps to 255.

    Raises
    ------
    CorruptionError
        If `lut` has non-finite entries.

    """
    if not np.all(np.isfinite(lut.table)):
        raise CorruptionError('distance table has non-finite entries')

    peak = lut.table.max()
    scale = INT_MAX_ENTRY / peak if peak > 0 else 1.0
    table = np.floor(lut.table * scale + 0.5)
    return IntLUT(np.clip(table, 0, INT_MAX_ENTRY), scale)


def _check_code(code, lut):
    code = np.asarray(code, dtype=np.int64)
    if code.shape != (lut.num_subspaces,):
        raise ConfigurationError(
            f'code must have {lut.num_subspaces} indices, shape is '
            f'{code.shape}')
    if code.min() < 0 or code.max() >= lut.num_centroids:
        raise CorruptionError(
            f'code index out of range [0, {lut.num_centroids})')
    return code


def scr_distance(code_a, code_b, lut):
    """Sum over sub-spaces of lut[m][a_m][b_m]"""
    code_a = _check_code(code_a, lut)
    code_b = _check_code(code_b, lut)
    return float(
        lut.table[np.arange(lut.num_subspaces), code_a, code_b].sum())


def int_scr_distance(code_a, code_b, intlut):
    """Sum over sub-spaces of the integer entries, at most 255 x M"""
    code_a = _check_code(code_a, intlut)
    code_b = _check_code(code_b, intlut)
    return int(intlut.table[
        np.arange(intlut.num_subspaces), code_a, code_b].sum(dtype=np.int64))


def distance_row(query_code, gallery_codes, lut, query_index=0):
    """Returns the (int_)scr distances of a query code to every gallery code

    The kind of the row follows the type of `lut` (DistanceLUT or IntLUT).

    Raises
    ------
    ConfigurationError
        If M or C differ between the codes and the table.

    """
    if gallery_codes.num_subspaces != lut.num_subspaces:
        raise ConfigurationError(
            f'gallery codes have M={gallery_codes.num_subspaces}, table '
            f'has M={lut.num_subspaces}')
    if gallery_codes.num_centroids != lut.num_centroids:
        raise ConfigurationError(
            f'gallery codes have C={gallery_codes.num_centroids}, table '
            f'has C={lut.num_centroids}')
    query_code = _check_code(query_code, lut)

    integer = isinstance(lut, IntLUT)
    distances = np.zeros(
        len(gallery_codes), dtype=np.uint32 if integer else np.float64)
    for m in range(lut.num_subspaces):
        distances += lut.table[m, query_code[m]][gallery_codes.codes[:, m]]

    if integer:
        return DistanceRow(
            query_index, distances, DistanceKind.int_scr, lut.max_distance)
    return DistanceRow(query_index, distances, DistanceKind.scr)


def exact_distance_row(query_vector, gallery, query_index=0):
    """Returns the squared Euclidean distances of a query to the gallery"""
    query_vector = np.asarray(query_vector, dtype=np.float64).reshape(1, -1)
    vectors = np.asarray(
        getattr(gallery, 'vectors', gallery), dtype=np.float64)
    if query_vector.shape[1] != vectors.shape[1]:
        raise ConfigurationError(
            f'query has dimension {query_vector.shape[1]}, gallery has '
            f'{vectors.shape[1]}')

    distances = scipy.spatial.distance.cdist(
        query_vector, vectors, 'sqeuclidean')[0]
    return DistanceRow(query_index, distances, DistanceKind.euclidean)


def random_hyperplanes(dim, num_bits, rng_seed=0):
    """Returns a dim x num_bits Gaussian projection, None if num_bits == dim"""
    if num_bits < 1 or num_bits > dim:
        raise ConfigurationError(
            f'number of bits must be in [1, {dim}], it is {num_bits}')
    if num_bits == dim:
        return None
    return np.random.default_rng(rng_seed).normal(size=(dim, num_bits))


def binarize(vectors, hyperplanes=None):
    """Returns packed sign bits (x > 0) of `vectors`, N x ceil(bits/8) uint8

    When `hyperplanes` is given the vectors are projected on them first.

    """
    vectors = np.asarray(getattr(vectors, 'vectors', vectors), np.float64)
    if hyperplanes is not None:
        vectors = vectors @ hyperplanes
    return np.packbits(vectors > 0, axis=-1)


def hamming_distance_row(query_bits, gallery_bits, query_index=0,
                         num_bits=None):
    """Returns the popcount of query XOR gallery for every gallery code

    Raises
    ------
    ConfigurationError
        If the packed lengths differ.

    """
    query_bits = np.asarray(query_bits, dtype=np.uint8).ravel()
    gallery_bits = np.atleast_2d(np.asarray(gallery_bits, dtype=np.uint8))
    if query_bits.shape[0] != gallery_bits.shape[1]:
        raise ConfigurationError(
            f'bit length mismatch: {8 * query_bits.shape[0]} != '
            f'{8 * gallery_bits.shape[1]}')

    distances = _POPCOUNT[np.bitwise_xor(gallery_bits, query_bits)].sum(
        axis=1, dtype=np.uint32)
    max_value = num_bits if num_bits is not None else 8 * query_bits.shape[0]
    return DistanceRow(
        query_index, distances, DistanceKind.hamming, max_value)


def save_lut(lut, path):
    """Writes a DistanceLUT (kind 0) or an IntLUT (kind 1) to `path`"""
    header = (lut.num_subspaces, lut.num_centroids)
    if isinstance(lut, IntLUT):
        binary.write_artifact(
            path, LUT_MAGIC, LUT_LAYOUT + 'd', (1, *header, lut.scale),
            [(lut.table, '<u1')])
    else:
        binary.write_artifact(
            path, LUT_MAGIC, LUT_LAYOUT, (0, *header),
            [(lut.table, '<f4')])


def load_lut(path):
    """Returns the DistanceLUT or IntLUT stored in `path`"""
    reader = binary.Reader(path)
    kind, num_subspaces, num_centroids = reader.header(LUT_MAGIC, LUT_LAYOUT)
    shape = (num_subspaces, num_centroids, num_centroids)
    count = num_subspaces * num_centroids * num_centroids

    if kind == 0:
        start = reader.offset
        table = reader.array('<f4', count, 'table')
        reader.finish()
        reader.finite(table, start, 'table')
        return DistanceLUT(table.reshape(shape))

    if kind == 1:
        scale, = reader.unpack('d')
        table = reader.array('<u1', count, 'table')
        reader.finish()
        return IntLUT(table.reshape(shape), scale)

    raise FormatError(path, 8, f'unknown table kind {kind}')
