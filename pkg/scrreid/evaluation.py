"""Retrieval accuracy (CMC, mAP) and ranking speed benchmarks"""

import dataclasses
import math
import sys
import time

import joblib
import numpy as np
import pandas

from scrreid import features, pipeline, quantizer, ranking
from scrreid.exception import ArgumentError, ProtocolError, ValidationError


RANKS = (1, 5, 10, 20)


@dataclasses.dataclass
class EvalReport:
    """Accuracy of one pipeline over a query set

    `cmc[k - 1]` is the fraction of evaluated queries whose first valid
    match is ranked within the top k.

    """
    pipeline: str
    distance_kind: str
    cmc: np.ndarray
    mAP: float
    num_queries_evaluated: int
    num_skipped: int = 0

    def rank(self, k):
        """Rank-k hit rate, the last CMC value when k exceeds the gallery"""
        if k < 1:
            raise ArgumentError(f'k must be positive, it is {k}')
        return float(self.cmc[min(k, self.cmc.size) - 1])

    @property
    def rank_k(self):
        return {k: self.rank(k) for k in RANKS}

    def to_frame(self):
        return pandas.DataFrame([{
            'pipeline': self.pipeline,
            'distance_kind': self.distance_kind,
            'num_queries': self.num_queries_evaluated,
            'num_skipped': self.num_skipped,
            'mAP': self.mAP,
            **{f'rank_{k}': v for k, v in self.rank_k.items()}}])


def query_metrics(order, query_pid, query_cam, gallery_pids, gallery_cams):
    """Returns the first valid hit position and the AP of one ranking

    Gallery items sharing both identity and camera with the query are removed
    from the ranking before scoring. Returns None when no valid match remains.

    """
    pids = gallery_pids[order]
    keep = ~((pids == query_pid) & (gallery_cams[order] == query_cam))
    hits = np.flatnonzero(pids[keep] == query_pid)
    if not hits.size:
        return None

    precision = np.arange(1, hits.size + 1) / (hits + 1)
    return hits[0], precision.mean()


def _evaluate_chunk(searcher, prepared, indices, query, length):
    gallery = searcher.gallery
    cmc = np.zeros(length, dtype=np.int64)
    precisions = []
    for index in indices:
        result = searcher.rank(searcher.distance_row(prepared, index))
        metrics = query_metrics(
            result.order, query.person_ids[index], query.camera_ids[index],
            gallery.person_ids, gallery.camera_ids)
        if metrics is None:
            continue

        first, average_precision = metrics
        if first < length:
            cmc[first] += 1
        precisions.append(average_precision)
    return cmc, precisions


def evaluate_searcher(searcher, query, max_rank=None, njobs=1):
    """Returns the EvalReport of `query` against a built Searcher

    Queries with no valid match after filtering are skipped and counted.

    Raises
    ------
    ProtocolError
        If every query is skipped.

    """
    length = min(max_rank or searcher.gallery.size, searcher.gallery.size)
    prepared = searcher.prepare(query)
    chunks = [c for c in np.array_split(np.arange(query.size), njobs) if c.size]

    results = joblib.Parallel(n_jobs=njobs)(
        joblib.delayed(_evaluate_chunk)(
            searcher, prepared, chunk, query, length) for chunk in chunks)

    first_hits = sum(r[0] for r in results)
    precisions = [p for r in results for p in r[1]]
    if not precisions:
        raise ProtocolError(
            'no query has a valid match in the gallery',
            np.unique(query.person_ids).tolist())

    return EvalReport(
        searcher.pipeline.name,
        searcher.kind.name,
        np.cumsum(first_hits) / len(precisions),
        float(np.mean(precisions)),
        len(precisions),
        query.size - len(precisions))


def evaluate(query, gallery, pipeline_name='exact', algorithm=None,
             codebook=None, codes=None, lut=None, num_bits=None, rng_seed=0,
             max_rank=None, njobs=1):
    """Evaluates a retrieval pipeline under the junk filtering protocol

    Parameters
    ----------
    query : FeatureSet
        Query vectors with their identity and camera labels.
    gallery : FeatureSet
        The gallery to search.
    pipeline_name : str or Pipeline
        One of exact, scr, intscr or hamming.
    algorithm : str, optional
        Ranking algorithm, default to the one of the pipeline.
    codebook : Codebook, optional
        Required by scr and intscr.
    codes : CodeMatrix, optional
        Precomputed gallery codes.
    lut : DistanceLUT or IntLUT, optional
        Precomputed look-up table.
    num_bits : int, optional
        Hamming code length, default to the dimension.
    rng_seed : int
        Seed of the hamming projection.
    max_rank : int, optional
        Length of the CMC curve, default to the gallery size.
    njobs : int
        Number of parallel jobs over queries.

    Returns
    -------
    report : EvalReport

    Raises
    ------
    ProtocolError
        If no query has a valid match.
    ConfigurationError
        If the pipeline or its structures are not valid.

    """
    if not query.size or not gallery.size:
        raise ArgumentError('query and gallery must not be empty')

    searcher = pipeline.Searcher(
        gallery, pipeline_name, codebook=codebook, codes=codes, lut=lut,
        num_bits=num_bits, rng_seed=rng_seed, algorithm=algorithm)
    return evaluate_searcher(searcher, query, max_rank=max_rank, njobs=njobs)


def distinct_distance_census(rows):
    """Returns the number of distinct real and integer distances in `rows`"""
    real = [r.distances for r in rows if not r.is_integer]
    integer = [r.distances for r in rows if r.is_integer]
    return (
        np.unique(np.concatenate(real)).size if real else 0,
        np.unique(np.concatenate(integer)).size if integer else 0)


@dataclasses.dataclass(frozen=True)
class BenchConfig:
    """Parameters of the ranking speed benchmark"""
    dim: int = 128
    num_subspaces: int = 4
    num_centroids: int = 256
    num_bits: int = 32
    num_identities: int = 1000
    num_queries: int = 10
    warmup: int = 1
    train_size: int = 20000
    kmeans_iters: int = 10
    rng_seed: int = 0

    def validate(self):
        for name in ('dim', 'num_subspaces', 'num_centroids', 'num_bits',
                     'num_identities', 'train_size', 'kmeans_iters'):
            value = getattr(self, name)
            if value < 1:
                raise ValidationError(f'{name} must be at least 1, it is {value}')
        if self.num_queries < 10:
            raise ValidationError(
                f'num_queries must be at least 10, it is {self.num_queries}')
        if self.warmup < 1:
            raise ValidationError(
                f'warmup must be at least 1, it is {self.warmup}')


@dataclasses.dataclass
class BenchReport:
    """Per (gallery size, pipeline) query timings"""
    rows: list = dataclasses.field(default_factory=list)
    notices: list = dataclasses.field(default_factory=list)

    COLUMNS = [
        'gallery_size', 'pipeline', 'distance_kind', 'code_length_bits',
        'build_time_s', 'mean_distance_time_s', 'mean_sort_time_s',
        'mean_query_time_s', 'queries_per_second']

    def to_frame(self):
        return pandas.DataFrame(self.rows, columns=self.COLUMNS)


def _bench_data(max_size, config):
    total = max_size + config.num_queries
    per_identity = math.ceil(total / config.num_identities)
    data = features.generate_synthetic(features.SynthSpec(
        config.num_identities, per_identity, config.dim,
        rng_seed=config.rng_seed))
    order = np.random.default_rng(config.rng_seed).permutation(data.size)
    return data.subset(order[:max_size]), data.subset(order[max_size:total])


def _time_queries(searcher, queries, config):
    prepared = searcher.prepare(queries)
    for _ in range(config.warmup):
        searcher.rank(searcher.distance_row(prepared, 0))

    distance_times, sort_times = [], []
    for index in range(prepared.shape[0]):
        start = time.perf_counter()
        row = searcher.distance_row(prepared, index)
        middle = time.perf_counter()
        searcher.rank(row)
        stop = time.perf_counter()
        distance_times.append(middle - start)
        sort_times.append(stop - middle)
    return np.mean(distance_times), np.mean(sort_times)


def bench_ranking(gallery_sizes, pipelines, config=None, verbose=False):
    """Times distance computation and ranking per query

    Data for the largest size is generated once and smaller galleries are its
    prefixes. The codebook is trained on a sample of the gallery, offline
    structures are built untimed (their time is reported apart) and each
    pipeline is warmed up before timing.

    Returns
    -------
    report : BenchReport
        A size that does not fit in memory is skipped with a notice.

    """
    config = config or BenchConfig()
    config.validate()
    pipelines = [pipeline.get_pipeline(p) for p in pipelines]
    gallery_sizes = sorted(int(s) for s in gallery_sizes)
    if not gallery_sizes or gallery_sizes[0] < 1:
        raise ArgumentError('gallery sizes must be positive')

    report = BenchReport()

    def notice(message):
        report.notices.append(message)
        if verbose:
            print(f'WARNING: {message}', file=sys.stderr)

    while gallery_sizes:
        try:
            gallery, queries = _bench_data(gallery_sizes[-1], config)
            break
        except MemoryError:
            notice(f'not enough memory for gallery size {gallery_sizes[-1]}, '
                   f'skipped')
            del gallery_sizes[-1]
    if not gallery_sizes:
        return report

    sample = np.random.default_rng(config.rng_seed).permutation(
        gallery.size)[:config.train_size]
    codebook = None
    if {pipeline.Pipeline.scr, pipeline.Pipeline.intscr} & set(pipelines):
        codebook, _ = quantizer.train_codebook(
            gallery.subset(np.sort(sample)), config.num_subspaces,
            config.num_centroids, config.kmeans_iters,
            rng_seed=config.rng_seed)

    for size in gallery_sizes:
        if verbose:
            print(f'  > gallery size {size}')
        try:
            subset = gallery.subset(np.arange(size))
            rows = []
            for kind in pipelines:
                start = time.perf_counter()
                searcher = pipeline.Searcher(
                    subset, kind, codebook=codebook,
                    num_bits=(config.num_bits
                              if kind == pipeline.Pipeline.hamming else None),
                    rng_seed=config.rng_seed)
                build_time = time.perf_counter() - start

                distance_time, sort_time = _time_queries(
                    searcher, queries, config)
                query_time = distance_time + sort_time
                rows.append({
                    'gallery_size': size,
                    'pipeline': kind.name,
                    'distance_kind': searcher.kind.name,
                    'code_length_bits': searcher.code_length_bits,
                    'build_time_s': build_time,
                    'mean_distance_time_s': distance_time,
                    'mean_sort_time_s': sort_time,
                    'mean_query_time_s': query_time,
                    'queries_per_second': 1 / query_time})
            report.rows.extend(rows)
        except MemoryError:
            notice(f'not enough memory for gallery size {size}, skipped')

    return report


def bench_sorting(sizes, max_value=1020, repeats=10, rng_seed=0):
    """Times counting sort of integer rows against comparison sort of floats

    Each repeat draws a row of integers in [0, max_value], counting sort ranks
    it as is and comparison sort ranks the same row cast to float64.

    Returns
    -------
    pandas.DataFrame
        Columns size, counting_time_s, comparison_time_s and speedup.

    """
    rng = np.random.default_rng(rng_seed)
    sorter = ranking.CountingSorter(max_value)
    records = []
    for size in sizes:
        size = int(size)
        counting, comparison = [], []
        for _ in range(repeats + 1):
            row = rng.integers(0, max_value + 1, size, dtype=np.uint32)
            as_float = row.astype(np.float64)

            start = time.perf_counter()
            sorter.argsort(row)
            middle = time.perf_counter()
            np.argsort(as_float, kind='stable')
            stop = time.perf_counter()

            counting.append(middle - start)
            comparison.append(stop - middle)

        # first repeat is the warm-up
        counting, comparison = np.mean(counting[1:]), np.mean(comparison[1:])
        records.append({
            'size': size,
            'counting_time_s': counting,
            'comparison_time_s': comparison,
            'speedup': comparison / counting})
    return pandas.DataFrame(records)


def sweep_accuracy(query, gallery, subspaces, centroids,
                   pipelines=('scr', 'intscr'), seeds=(0, 1, 2),
                   kmeans_iters=25, njobs=1):
    """Accuracy versus M and C, averaged over codebook seeds

    For each (M, C, seed) a codebook is trained on the gallery. The hamming
    pipeline is evaluated at the same code length (M x ceil(log2 C) bits,
    capped at the dimension) and the exact pipeline once per seed.

    Returns
    -------
    pandas.DataFrame
        Columns num_subspaces, num_centroids, pipeline, code_length_bits,
        mAP and rank_k, one row per (M, C, pipeline).

    """
    pipelines = [pipeline.get_pipeline(p) for p in pipelines]
    records = []
    for num_subspaces in subspaces:
        for num_centroids in centroids:
            for seed in seeds:
                codebook = None
                if {pipeline.Pipeline.scr, pipeline.Pipeline.intscr} & set(
                        pipelines):
                    codebook, _ = quantizer.train_codebook(
                        gallery, num_subspaces, num_centroids, kmeans_iters,
                        rng_seed=seed, njobs=njobs)

                bits = num_subspaces * max(1, math.ceil(math.log2(num_centroids)))
                for kind in pipelines:
                    searcher = pipeline.Searcher(
                        gallery, kind, codebook=codebook,
                        num_bits=min(bits, gallery.dim), rng_seed=seed)
                    report = evaluate_searcher(searcher, query, njobs=njobs)
                    records.append({
                        'num_subspaces': num_subspaces,
                        'num_centroids': num_centroids,
                        'pipeline': kind.name,
                        'seed': seed,
                        'code_length_bits': searcher.code_length_bits,
                        'mAP': report.mAP,
                        **{f'rank_{k}': v for k, v in report.rank_k.items()}})

    frame = pandas.DataFrame(records)
    return (frame
            .groupby(['num_subspaces', 'num_centroids', 'pipeline'],
                     sort=False)
            .mean(numeric_only=True)
            .drop(columns='seed')
            .reset_index())
