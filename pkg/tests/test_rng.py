import numpy as np
import pytest
from scipy.special import ndtri

from samplers.rng import BLOCK_SIZE, SampleStream, unit_interval


def test_values_do_not_depend_on_batching():
    """Test sample m always reads the same numbers"""
    stream = SampleStream(123, 2)
    whole = stream.normals(0, 3 * BLOCK_SIZE + 17, 5)
    parts = np.vstack([
        stream.normals(0, 100, 5),
        stream.normals(100, BLOCK_SIZE, 5),
        stream.normals(100 + BLOCK_SIZE, 2 * BLOCK_SIZE + 17 - 100, 5),
    ])
    assert np.array_equal(whole, parts)


def test_streams_are_keyed_by_seed_and_level():
    base = SampleStream(5, 1).uniforms(0, 10, 3)
    assert np.array_equal(base, SampleStream(5, 1).uniforms(0, 10, 3))
    assert not np.array_equal(base, SampleStream(6, 1).uniforms(0, 10, 3))
    assert not np.array_equal(base, SampleStream(5, 2).uniforms(0, 10, 3))


def test_normals_are_finite_and_standard():
    values = SampleStream(0, 0).normals(0, 20000, 1)
    assert np.all(np.isfinite(values))
    assert abs(values.mean()) < 0.05
    assert values.std() == pytest.approx(1.0, abs=0.05)


def test_negative_seed_is_accepted():
    assert SampleStream(-1, 0).uniforms(0, 2, 2).shape == (2, 2)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        SampleStream(0, -1)
    with pytest.raises(ValueError):
        SampleStream(0, 0).uniforms(-1, 2, 2)


def test_unit_interval_excludes_both_ends():
    raw = np.array([0, 1, (1 << 63), (1 << 64) - 1], dtype=np.uint64)
    u = unit_interval(raw)
    assert np.all((u > 0.0) & (u < 1.0))
    assert u[-1] == 1.0 - 2.0 ** -53
    assert np.all(np.isfinite(ndtri(u)))


def test_uniforms_stay_open():
    u = SampleStream(11, 3).uniforms(0, 4 * BLOCK_SIZE, 8)
    assert u.min() > 0.0
    assert u.max() < 1.0
