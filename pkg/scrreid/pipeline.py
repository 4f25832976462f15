"""Retrieval pipelines: offline gallery structures and online query ranking"""

from enum import Enum

import numpy as np

from scrreid import distance, quantizer, ranking
from scrreid.exception import ConfigurationError, MismatchError


Pipeline = Enum('Pipeline', 'exact scr intscr hamming')

DEFAULT_ALGORITHM = {
    Pipeline.exact: ranking.Algorithm.comparison,
    Pipeline.scr: ranking.Algorithm.comparison,
    Pipeline.intscr: ranking.Algorithm.counting,
    Pipeline.hamming: ranking.Algorithm.counting}

DISTANCE_KIND = {
    Pipeline.exact: distance.DistanceKind.euclidean,
    Pipeline.scr: distance.DistanceKind.scr,
    Pipeline.intscr: distance.DistanceKind.int_scr,
    Pipeline.hamming: distance.DistanceKind.hamming}


def get_pipeline(name):
    """Returns the Pipeline named `name` (or `name` if already a Pipeline)"""
    if isinstance(name, Pipeline):
        return name
    try:
        return Pipeline[name]
    except KeyError:
        raise ConfigurationError(
            f'pipeline must be in ({", ".join(p.name for p in Pipeline)}) '
            f'but is {name}')


def get_algorithm(name):
    if name is None or isinstance(name, ranking.Algorithm):
        return name
    try:
        return ranking.Algorithm[name]
    except KeyError:
        raise ConfigurationError(
            f'ranker must be "counting" or "comparison" but is {name}')


class Searcher:
    """Ranks queries against a gallery with one pipeline

    The offline structures (codes, look-up tables, binary codes) are built at
    construction from the given `codebook`, or loaded artifacts when given.

    Parameters
    ----------
    gallery : FeatureSet
        The gallery to search.
    pipeline : Pipeline or str
        One of exact, scr, intscr or hamming.
    codebook : Codebook, optional
        Required by the scr and intscr pipelines.
    codes : CodeMatrix, optional
        Precomputed gallery codes, encoded from `codebook` when not given.
    lut : DistanceLUT or IntLUT, optional
        Precomputed table matching the pipeline, built when not given.
    num_bits : int, optional
        Length of the hamming codes, default to the gallery dimension.
    rng_seed : int
        Seed of the hamming projection.
    algorithm : ranking.Algorithm or str, optional
        Overrides the default ranking algorithm of the pipeline.

    """
    def __init__(self, gallery, pipeline, codebook=None, codes=None, lut=None,
                 num_bits=None, rng_seed=0, algorithm=None):
        self.gallery = gallery
        self.pipeline = get_pipeline(pipeline)
        self.algorithm = (
            get_algorithm(algorithm) or DEFAULT_ALGORITHM[self.pipeline])
        self.kind = DISTANCE_KIND[self.pipeline]
        self.codebook = codebook
        self.codes = codes
        self.lut = lut
        self.hyperplanes = None
        self.num_bits = None
        self.max_value = None

        if self.pipeline == Pipeline.exact:
            self._vectors = gallery.vectors.astype(np.float64)
        elif self.pipeline in (Pipeline.scr, Pipeline.intscr):
            self._build_codes()
        elif self.pipeline == Pipeline.hamming:
            self.num_bits = num_bits or gallery.dim
            self.hyperplanes = distance.random_hyperplanes(
                gallery.dim, self.num_bits, rng_seed)
            self.codes = distance.binarize(gallery, self.hyperplanes)
            self.max_value = self.num_bits

        if (self.algorithm == ranking.Algorithm.counting
                and self.max_value is None):
            raise ConfigurationError(
                f'counting sort needs integer distances, pipeline '
                f'{self.pipeline.name} has real ones')
        self._sorter = (
            ranking.CountingSorter(self.max_value)
            if self.algorithm == ranking.Algorithm.counting else None)

    def _build_codes(self):
        if self.codebook is None:
            raise ConfigurationError(
                f'pipeline {self.pipeline.name} requires a codebook')

        if self.codes is None:
            self.codes = quantizer.encode(self.gallery, self.codebook)
        quantizer.check_codes(self.codes, self.codebook)
        if len(self.codes) != self.gallery.size:
            raise ConfigurationError(
                f'{len(self.codes)} codes for a gallery of '
                f'{self.gallery.size} vectors')

        if self.lut is None:
            self.lut = distance.build_lut(self.codebook)
            if self.pipeline == Pipeline.intscr:
                self.lut = distance.quantize_lut(self.lut)

        if self.lut.kind != self.kind:
            raise ConfigurationError(
                f'pipeline {self.pipeline.name} requires a '
                f'{self.kind.name} table, got {self.lut.kind.name}')

        expected = {('M', self.codes.num_subspaces),
                    ('C', self.codes.num_centroids)}
        observed = {('M', self.lut.num_subspaces),
                    ('C', self.lut.num_centroids)}
        if expected != observed:
            raise MismatchError(
                'codes and table mismatch', expected, observed)

        if self.pipeline == Pipeline.intscr:
            self.max_value = self.lut.max_distance

    @property
    def code_length_bits(self):
        """Bits per gallery item (float32 coordinates for exact)"""
        if self.pipeline == Pipeline.exact:
            return 32 * self.gallery.dim
        if self.pipeline == Pipeline.hamming:
            return self.num_bits
        return self.codes.num_subspaces * int(
            np.ceil(np.log2(self.codes.num_centroids)))

    def prepare(self, queries):
        """Returns the online representation of the query vectors"""
        if self.pipeline == Pipeline.exact:
            return np.asarray(
                getattr(queries, 'vectors', queries), dtype=np.float64)
        if self.pipeline == Pipeline.hamming:
            return distance.binarize(queries, self.hyperplanes)
        return quantizer.encode(queries, self.codebook).codes

    def distance_row(self, prepared, index):
        """Returns the DistanceRow of the prepared query at `index`"""
        query = prepared[index]
        if self.pipeline == Pipeline.exact:
            return distance.exact_distance_row(query, self._vectors, index)
        if self.pipeline == Pipeline.hamming:
            return distance.hamming_distance_row(
                query, self.codes, index, self.num_bits)
        return distance.distance_row(query, self.codes, self.lut, index)

    def rank(self, row):
        if self._sorter is not None:
            return self._sorter.rank(row)
        return ranking.comparison_sort_rank(row)

    def search(self, queries, k=None):
        """Returns the (top `k`) RankResult of every query"""
        prepared = self.prepare(queries)
        results = []
        for index in range(prepared.shape[0]):
            result = self.rank(self.distance_row(prepared, index))
            results.append(result if k is None else ranking.top_k(result, k))
        return results
