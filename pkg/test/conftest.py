import numpy as np
import pytest

from scrreid import features


def _numerical_gradient(function, x, step=1e-5):
    """Central finite differences of the scalar `function` at `x`"""
    x = np.array(x, dtype=np.float64)
    gradient = np.zeros_like(x)
    for index in np.ndindex(*x.shape):
        shift = np.zeros_like(x)
        shift[index] = step
        gradient[index] = (
            function(x + shift) - function(x - shift)) / (2 * step)
    return gradient


def _relative_error(analytic, numeric):
    return (np.linalg.norm(analytic - numeric)
            / np.linalg.norm(analytic + numeric))


@pytest.fixture
def numerical_gradient():
    return _numerical_gradient


@pytest.fixture
def relative_error():
    return _relative_error


@pytest.fixture
def tiny_set():
    return features.FeatureSet(
        [[0, 0, 0, 0], [1, 1, 1, 1], [0, 0, 2, 2], [1, 1, 2, 2]],
        [0, 0, 1, 1], [0, 1, 0, 1])


@pytest.fixture
def separable_set():
    """20 identities of 10 instances in dimension 32, far apart"""
    return features.generate_synthetic(features.SynthSpec(
        20, 10, 32, cluster_stddev=0.5, identity_separation=20.0, rng_seed=0))


@pytest.fixture
def reid_split():
    """Returns the (query, gallery) split of a clustered set for a seed

    100 identities of 10 instances in dimension 128 on 2 cameras, 30% of each
    identity in the query set.

    """
    def make(seed):
        data = features.generate_synthetic(features.SynthSpec(
            100, 10, 128, cluster_stddev=1.0, identity_separation=3.5,
            num_cameras=2, rng_seed=seed))
        return features.split_query_gallery(data, 0.3, rng_seed=seed)
    return make
