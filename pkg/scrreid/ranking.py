"""Ranking of distance rows: counting sort and comparison sort

Both algorithms order the gallery by ascending distance and break ties by
ascending gallery index, so they return identical rankings on integer rows.

"""

import dataclasses
from enum import Enum

import numpy as np
from numba import njit

from scrreid.exception import ArgumentError, ContractError


Algorithm = Enum('Algorithm', 'counting comparison')


@dataclasses.dataclass(frozen=True, eq=False)
class RankResult:
    """Gallery indices of one query sorted by distance"""
    query_index: int
    order: np.ndarray
    distances: np.ndarray
    algorithm: Algorithm

    def __len__(self):
        return self.order.shape[0]


@njit(cache=True)
def _counting_sort(values, counts, order):
    counts[:] = 0
    for i in range(values.shape[0]):
        counts[values[i]] += 1

    # exclusive prefix sum: first output slot of each bucket
    total = 0
    for bucket in range(counts.shape[0]):
        count = counts[bucket]
        counts[bucket] = total
        total += count

    for i in range(values.shape[0]):
        value = values[i]
        order[counts[value]] = i
        counts[value] += 1


class CountingSorter:
    """Counting sort over integer distances in [0, max_value]

    The counting array of max_value + 1 buckets is allocated once and reset
    for every row, a sorter must not be shared between threads.

    """
    def __init__(self, max_value):
        if max_value < 0:
            raise ArgumentError(
                f'max_value must be non-negative, it is {max_value}')
        self.max_value = int(max_value)
        self._counts = np.zeros(self.max_value + 1, dtype=np.int64)

    def argsort(self, distances):
        """Returns the stable ascending order of integer `distances`

        Raises
        ------
        ContractError
            If a value is out of [0, max_value].

        """
        if distances.size:
            if distances.min() < 0:
                raise ContractError('counting sort needs non-negative values')
            if distances.max() > self.max_value:
                raise ContractError(
                    f'distance {distances.max()} exceeds the maximal value '
                    f'{self.max_value}')

        order = np.empty(distances.shape[0], dtype=np.int64)
        _counting_sort(distances, self._counts, order)
        return order

    def rank(self, row):
        """Returns the RankResult of the integer DistanceRow `row`

        Raises
        ------
        ContractError
            If the row is not of an integer kind or holds a value out of
            [0, max_value].

        """
        distances = row.distances
        if not row.is_integer or not np.issubdtype(
                distances.dtype, np.integer):
            raise ContractError(
                f'counting sort needs integer distances, got '
                f'{row.kind.name} ({distances.dtype})')

        order = self.argsort(distances)
        return RankResult(
            row.query_index, order, distances[order], Algorithm.counting)


def counting_sort_rank(row, max_value=None):
    """Ranks an integer row in O(N + max_value)

    `max_value` defaults to the bound carried by the row (255 x M for an
    int_scr row, the bit length for a hamming row).

    """
    if max_value is None:
        max_value = row.max_value
    if max_value is None:
        raise ContractError('counting sort needs a maximal distance value')
    return CountingSorter(max_value).rank(row)


def comparison_sort_rank(row):
    """Ranks a real or integer row with a stable O(N log N) sort

    Raises
    ------
    ContractError
        If the row holds NaN.

    """
    distances = row.distances
    if np.issubdtype(distances.dtype, np.floating) and np.isnan(
            distances).any():
        raise ContractError('cannot rank NaN distances')

    order = np.argsort(distances, kind='stable')
    return RankResult(
        row.query_index, order, distances[order], Algorithm.comparison)


def top_k(result, k):
    """Returns the first `k` entries of `result`

    Raises
    ------
    ArgumentError
        If `k` is not in [1, N].

    """
    if not 1 <= k <= len(result):
        raise ArgumentError(f'k must be in [1, {len(result)}], it is {k}')

    return RankResult(
        result.query_index, result.order[:k], result.distances[:k],
        result.algorithm)
