import itertools

import numpy as np
import pytest

from scrreid import distance, features, quantizer
from scrreid.exception import ConfigurationError, CorruptionError, FormatError


@pytest.fixture
def two_by_two():
    return quantizer.Codebook([[[0, 0], [1, 1]], [[0, 0], [2, 2]]])


@pytest.fixture
def random_codebook():
    rng = np.random.default_rng(0)
    return quantizer.Codebook(rng.normal(size=(4, 64, 8)))


def brute_force(a, b):
    return np.array([[((x - y) ** 2).sum() for y in b] for x in a])


class TestEuclideanMatrix:
    def test_example(self):
        points = np.array([[0, 0, 0, 0], [1, 1, 1, 1]])
        matrix = distance.euclidean_matrix(points, points, 2)
        np.testing.assert_array_equal(matrix[0], [[0, 2], [2, 0]])
        np.testing.assert_array_equal(matrix[1], [[0, 2], [2, 0]])
        np.testing.assert_array_equal(matrix.sum(axis=0), [[0, 4], [4, 0]])

    def test_symmetric_zero_diagonal(self):
        points = np.random.default_rng(1).normal(size=(6, 8))
        matrix = distance.euclidean_matrix(points, points, 4)
        for block in matrix:
            np.testing.assert_array_equal(np.diag(block), 0)
            np.testing.assert_allclose(block, block.T)

    def test_sum_is_global_distance(self):
        points = np.random.default_rng(2).normal(size=(5, 8))
        matrix = distance.euclidean_matrix(points, points, 4)
        np.testing.assert_allclose(
            matrix.sum(axis=0), brute_force(points, points), rtol=1e-6)

    @pytest.mark.parametrize('num_subspaces', [4, 64, 256])
    def test_additivity_high_dimension(self, num_subspaces):
        rng = np.random.default_rng(num_subspaces)
        a = rng.normal(size=(100, 2048))
        b = rng.normal(size=(100, 2048))
        matrix = distance.euclidean_matrix(a, b, num_subspaces)
        summed = matrix.sum(axis=0)[np.arange(100), np.arange(100)]
        np.testing.assert_allclose(summed, ((a - b) ** 2).sum(axis=1), rtol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            distance.euclidean_matrix(np.zeros((2, 4)), np.zeros((2, 8)), 2)

    def test_feature_sets(self, tiny_set):
        matrix = distance.euclidean_matrix(tiny_set, tiny_set, 2)
        assert matrix.shape == (2, 4, 4)


class TestLUT:
    def test_example(self, two_by_two):
        lut = distance.build_lut(two_by_two)
        np.testing.assert_array_equal(lut.table[0], [[0, 2], [2, 0]])
        np.testing.assert_array_equal(lut.table[1], [[0, 8], [8, 0]])
        assert lut.kind == distance.DistanceKind.scr

    def test_single_centroid(self):
        lut = distance.build_lut(quantizer.Codebook(np.ones((3, 1, 2))))
        np.testing.assert_array_equal(lut.table, np.zeros((3, 1, 1)))

    def test_symmetric_zero_diagonal(self, random_codebook):
        lut = distance.build_lut(random_codebook)
        for block in lut.table:
            np.testing.assert_array_equal(np.diag(block), 0)
            np.testing.assert_array_equal(block, block.T)

    def test_quantize_example(self, two_by_two):
        intlut = distance.quantize_lut(distance.build_lut(two_by_two))
        assert intlut.scale == pytest.approx(31.875)
        np.testing.assert_array_equal(intlut.table[0], [[0, 64], [64, 0]])
        np.testing.assert_array_equal(intlut.table[1], [[0, 255], [255, 0]])
        assert intlut.table.dtype == np.uint8
        assert intlut.max_distance == 510

    def test_quantize_zeros(self):
        intlut = distance.quantize_lut(distance.DistanceLUT(np.zeros((2, 3, 3))))
        assert intlut.scale == 1
        assert not intlut.table.any()

    def test_quantize_max_is_255(self, random_codebook):
        lut = distance.build_lut(random_codebook)
        intlut = distance.quantize_lut(lut)
        assert intlut.table.max() == 255
        peak = np.unravel_index(lut.table.argmax(), lut.table.shape)
        assert intlut.table[peak] == 255

    def test_quantize_non_finite(self):
        table = np.zeros((1, 2, 2))
        table[0, 0, 1] = np.inf
        with pytest.raises(CorruptionError):
            distance.quantize_lut(distance.DistanceLUT(table))

    @pytest.mark.parametrize('entry', [256, -1, np.nan])
    def test_integer_entry_out_of_range(self, entry):
        table = np.zeros((1, 2, 2))
        table[0, 0, 1] = entry
        with pytest.raises(CorruptionError, match='255'):
            distance.IntLUT(table, 1.0)

    def test_integer_entry_bounds(self):
        intlut = distance.IntLUT([[[0, 255], [255, 0]]], 1.0)
        assert intlut.table.dtype == np.uint8
        assert intlut.table.max() == 255

    def test_entry_rounding_bound(self, random_codebook):
        lut = distance.build_lut(random_codebook)
        intlut = distance.quantize_lut(lut)
        gap = np.abs(intlut.scale * lut.table - intlut.table)
        assert gap.max() <= 0.5 + 1e-9


class TestCodeDistances:
    def test_scr_example(self, two_by_two):
        lut = distance.build_lut(two_by_two)
        assert distance.scr_distance([1, 0], [0, 1], lut) == 10
        assert distance.scr_distance([1, 1], [1, 1], lut) == 0

    def test_int_scr_example(self, two_by_two):
        intlut = distance.quantize_lut(distance.build_lut(two_by_two))
        assert distance.int_scr_distance([1, 0], [0, 1], intlut) == 319
        assert distance.int_scr_distance([0, 1], [0, 1], intlut) == 0

    def test_out_of_range(self, two_by_two):
        lut = distance.build_lut(two_by_two)
        with pytest.raises(CorruptionError):
            distance.scr_distance([2, 0], [0, 0], lut)
        with pytest.raises(CorruptionError):
            distance.int_scr_distance(
                [0, 0], [0, -1], distance.quantize_lut(lut))

    def test_quantization_bound(self, random_codebook):
        # M=4, C=64: sum of 4 entries each rounded within 0.5
        lut = distance.build_lut(random_codebook)
        intlut = distance.quantize_lut(lut)
        rng = np.random.default_rng(3)
        for _ in range(2000):
            a, b = rng.integers(0, 64, size=(2, 4))
            gap = abs(intlut.scale * distance.scr_distance(a, b, lut)
                      - distance.int_scr_distance(a, b, intlut))
            assert gap <= 0.5 * 4 + 1e-9
            assert distance.int_scr_distance(a, b, intlut) <= 255 * 4

    def test_lossless_equivalence(self):
        rng = np.random.default_rng(4)
        distinct = rng.normal(size=(180, 512))
        duplicates = distinct[rng.choice(180, 20, replace=False)]
        vectors = np.concatenate([distinct, duplicates])
        gallery = features.FeatureSet(vectors, np.arange(200), np.zeros(200))

        codebook, _ = quantizer.train_codebook(gallery, 4, 180)
        codes = quantizer.encode(gallery, codebook)
        lut = distance.build_lut(codebook)
        for query in range(0, 200, 10):
            exact = distance.exact_distance_row(gallery.vectors[query], gallery)
            scr = distance.distance_row(codes.codes[query], codes, lut)
            np.testing.assert_allclose(scr.distances, exact.distances, rtol=1e-6)
            np.testing.assert_array_equal(
                np.argsort(scr.distances, kind='stable'),
                np.argsort(exact.distances, kind='stable'))

    def test_error_decreases_with_centroids(self):
        data = features.generate_synthetic(features.SynthSpec(
            50, 10, 32, cluster_stddev=1.0, identity_separation=5.0))
        exact = distance.euclidean_matrix(
            data.subset(range(50)), data, 4).sum(axis=0)

        errors = []
        for num_centroids in (4, 16, 64, 256):
            per_seed = []
            for seed in range(3):
                codebook, _ = quantizer.train_codebook(
                    data, 4, num_centroids, rng_seed=seed)
                codes = quantizer.encode(data, codebook)
                lut = distance.build_lut(codebook)
                rows = np.stack([
                    distance.distance_row(codes.codes[q], codes, lut).distances
                    for q in range(50)])
                per_seed.append(np.abs(rows - exact).mean())
            errors.append(np.mean(per_seed))
        assert np.all(np.diff(errors) <= 0)


class TestDistanceRow:
    def test_matches_pairwise(self, random_codebook):
        rng = np.random.default_rng(5)
        codes = quantizer.CodeMatrix(rng.integers(0, 64, (30, 4)), 64)
        lut = distance.build_lut(random_codebook)
        intlut = distance.quantize_lut(lut)
        query = rng.integers(0, 64, 4)

        row = distance.distance_row(query, codes, lut, query_index=7)
        assert row.kind == distance.DistanceKind.scr
        assert row.query_index == 7
        np.testing.assert_allclose(
            row.distances,
            [distance.scr_distance(query, c, lut) for c in codes.codes])

        row = distance.distance_row(query, codes, intlut)
        assert row.kind == distance.DistanceKind.int_scr
        assert row.is_integer
        assert row.max_value == 255 * 4
        np.testing.assert_array_equal(
            row.distances,
            [distance.int_scr_distance(query, c, intlut) for c in codes.codes])

    def test_own_code_is_zero(self, random_codebook):
        codes = quantizer.CodeMatrix([[1, 2, 3, 4], [5, 6, 7, 8]], 64)
        row = distance.distance_row(
            [5, 6, 7, 8], codes, distance.build_lut(random_codebook))
        assert row.distances[1] == 0

    def test_shape_mismatch(self, random_codebook, two_by_two):
        codes = quantizer.CodeMatrix([[1, 2, 3, 4]], 64)
        with pytest.raises(ConfigurationError):
            distance.distance_row(
                [0, 0], codes, distance.build_lut(two_by_two))
        with pytest.raises(ConfigurationError):
            distance.distance_row(
                [0, 0, 0, 0], quantizer.CodeMatrix([[1, 2, 3, 4]], 128),
                distance.build_lut(random_codebook))


class TestExactRow:
    def test_example(self):
        row = distance.exact_distance_row([0, 0], np.array([[3, 4], [0, 0]]))
        np.testing.assert_array_equal(row.distances, [25, 0])
        assert row.kind == distance.DistanceKind.euclidean
        assert not row.is_integer

    def test_equals_subspace_sum(self, separable_set):
        row = distance.exact_distance_row(separable_set.vectors[3], separable_set)
        matrix = distance.euclidean_matrix(
            separable_set.vectors[[3]], separable_set, 4)
        np.testing.assert_allclose(row.distances, matrix.sum(axis=0)[0])

    def test_dimension_mismatch(self, tiny_set):
        with pytest.raises(ConfigurationError):
            distance.exact_distance_row([0, 0], tiny_set)


class TestHamming:
    def test_identical(self):
        bits = distance.binarize(np.random.default_rng(0).normal(size=(1, 32)))
        assert distance.hamming_distance_row(bits[0], bits).distances[0] == 0

    def test_complementary(self):
        vectors = np.where(np.arange(32) % 3, 1.0, -1.0)[None, :]
        bits = distance.binarize(np.concatenate([vectors, -vectors]))
        row = distance.hamming_distance_row(bits[0], bits)
        np.testing.assert_array_equal(row.distances, [0, 32])
        assert row.max_value == 32

    def test_matches_bit_loop(self):
        rng = np.random.default_rng(1)
        vectors = rng.normal(size=(20, 40))
        bits = distance.binarize(vectors)
        row = distance.hamming_distance_row(bits[0], bits, num_bits=40)
        signs = vectors > 0
        expected = [sum(signs[0][k] != signs[j][k] for k in range(40))
                    for j in range(20)]
        np.testing.assert_array_equal(row.distances, expected)
        assert row.max_value == 40

    def test_sign_at_zero(self):
        bits = distance.binarize(np.array([[0.0, 1.0, -1.0, 0.0]]))
        np.testing.assert_array_equal(np.unpackbits(bits)[:4], [0, 1, 0, 0])

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            distance.hamming_distance_row(
                np.zeros(4, np.uint8), np.zeros((3, 2), np.uint8))

    def test_hyperplanes(self):
        assert distance.random_hyperplanes(8, 8) is None
        planes = distance.random_hyperplanes(128, 32, rng_seed=2)
        assert planes.shape == (128, 32)
        np.testing.assert_array_equal(
            planes, distance.random_hyperplanes(128, 32, rng_seed=2))
        bits = distance.binarize(np.ones((3, 128)), planes)
        assert bits.shape == (3, 4)
        for num_bits in (0, 129):
            with pytest.raises(ConfigurationError):
                distance.random_hyperplanes(128, num_bits)


class TestLutFiles:
    def test_real(self, tmp_path, random_codebook):
        lut = distance.build_lut(random_codebook)
        distance.save_lut(lut, tmp_path / 'a.lut')
        loaded = distance.load_lut(tmp_path / 'a.lut')
        assert isinstance(loaded, distance.DistanceLUT)
        np.testing.assert_array_equal(
            loaded.table, lut.table.astype(np.float32))
        assert len((tmp_path / 'a.lut').read_bytes()) == 17 + 4 * 64 * 64 * 4

    def test_integer(self, tmp_path, random_codebook):
        intlut = distance.quantize_lut(distance.build_lut(random_codebook))
        distance.save_lut(intlut, tmp_path / 'a.lut')
        loaded = distance.load_lut(tmp_path / 'a.lut')
        assert isinstance(loaded, distance.IntLUT)
        assert loaded.scale == intlut.scale
        np.testing.assert_array_equal(loaded.table, intlut.table)
        assert len((tmp_path / 'a.lut').read_bytes()) == 25 + 4 * 64 * 64

    def test_unknown_kind(self, tmp_path, two_by_two):
        distance.save_lut(distance.build_lut(two_by_two), tmp_path / 'a.lut')
        content = bytearray((tmp_path / 'a.lut').read_bytes())
        content[8] = 7
        (tmp_path / 'a.lut').write_bytes(bytes(content))
        with pytest.raises(FormatError, match='kind'):
            distance.load_lut(tmp_path / 'a.lut')

    def test_non_finite(self, tmp_path, two_by_two):
        distance.save_lut(distance.build_lut(two_by_two), tmp_path / 'a.lut')
        content = bytearray((tmp_path / 'a.lut').read_bytes())
        content[17:21] = np.float32(np.nan).tobytes()
        (tmp_path / 'a.lut').write_bytes(bytes(content))
        with pytest.raises(FormatError) as error:
            distance.load_lut(tmp_path / 'a.lut')
        assert error.value.offset == 17


def test_code_pairs_exhaustive_small(two_by_two):
    lut = distance.build_lut(two_by_two)
    intlut = distance.quantize_lut(lut)
    for a, b in itertools.product(
            itertools.product(range(2), repeat=2), repeat=2):
        gap = abs(intlut.scale * distance.scr_distance(a, b, lut)
                  - distance.int_scr_distance(a, b, intlut))
        assert gap <= 0.5 * 2 + 1e-9
