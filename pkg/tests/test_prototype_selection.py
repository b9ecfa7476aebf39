import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from components.prototype_selection import condense, is_consistent, write_prototypes_json
from core.errors import ConfigurationError
from core.storage import read_json
from tests.conftest import make_samples, two_clusters


def nearest_label_oracle(train, prototypes, x):
    """Exhaustive 1-NN: smallest distance, then smallest origin index."""
    best = None
    for origin, sample in zip(prototypes.origin_indices, prototypes.samples):
        d = float(np.sum((sample.u - x) ** 2))
        if best is None or (d, origin) < best[:2]:
            best = (d, origin, int(sample.label))
    return best[2]


def test_empty_input():
    with pytest.raises(ConfigurationError):
        condense([], seed=0)


def test_single_class_keeps_one_sample():
    X = np.abs(np.random.default_rng(0).normal(size=(10, 3)))
    prototypes = condense(make_samples(X, np.ones(10)), seed=0)
    assert len(prototypes) == 1


def test_one_point_per_class_is_kept_whole():
    samples = make_samples(np.array([[0.0, 0.0], [5.0, 5.0]]), np.array([1, -1]))
    prototypes = condense(samples, seed=4)
    assert prototypes.samples == samples
    assert prototypes.origin_indices == [0, 1]


@pytest.mark.parametrize("seed", range(20))
def test_separated_clusters_condense_consistently(seed):
    X, y = two_clusters(seed, n=200, d=4, separation=8.0, spread=1.0)
    train = make_samples(X, y)
    prototypes = condense(train, seed=seed)

    assert len(prototypes) < len(train)
    for sample in train:
        assert nearest_label_oracle(train, prototypes, sample.u) == int(sample.label)
    assert is_consistent(train, prototypes)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 60))
def test_overlapping_data_stays_consistent(seed, n):
    rng = np.random.default_rng(seed)
    X = np.abs(rng.normal(size=(n, 3)))
    y = rng.choice([-1, 1], size=n)
    train = make_samples(X, y)
    prototypes = condense(train, seed=seed)
    assert len(prototypes) <= len(train)
    assert is_consistent(train, prototypes)
    assert prototypes.origin_indices == sorted(prototypes.origin_indices)


def test_deterministic_under_seed():
    X, y = two_clusters(3, n=80, separation=2.0)
    train = make_samples(X, y)
    assert condense(train, seed=9).origin_indices == condense(train, seed=9).origin_indices


def test_prototype_dump(tmp_path):
    X, y = two_clusters(1, n=40)
    prototypes = condense(make_samples(X, y), seed=0)
    payload = read_json(write_prototypes_json(tmp_path / "prototypes.json", prototypes, seed=0))
    assert payload["size"] == len(prototypes)
    assert payload["origin_indices"] == prototypes.origin_indices
