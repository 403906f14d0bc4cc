import pytest

from mlmc import sampling
from mlmc.estimator import merge
from mlmc.sampling import HierarchySampler


def test_generate_tracks_work_and_indices(synthetic_sampler):
    session = HierarchySampler(synthetic_sampler, seed=1)
    stats = session.generate(2, 300)
    assert stats.level == 2
    assert stats.count == 300
    assert session.generated(2) == 300
    assert session.generated(1) == 0
    assert session.model_work == pytest.approx(300 * synthetic_sampler.hierarchy.work(2))
    assert session.measured_cost >= 0.0


def test_split_requests_match_one_request(synthetic_sampler):
    """Two consecutive batches see the same samples as a single batch"""
    one = HierarchySampler(synthetic_sampler, seed=9).generate(3, 500)
    session = HierarchySampler(synthetic_sampler, seed=9)
    two = merge(session.generate(3, 120), session.generate(3, 380))
    assert two.count == one.count
    assert two.mean == pytest.approx(one.mean, rel=1e-12)
    assert two.m2 == pytest.approx(one.m2, rel=1e-10)


def test_chunking_does_not_change_samples(gbm_sampler, monkeypatch):
    whole = HierarchySampler(gbm_sampler, seed=4).generate(2, 64)
    monkeypatch.setattr(sampling, "MAX_CHUNK_VALUES", 20)
    chunked = HierarchySampler(gbm_sampler, seed=4).generate(2, 64)
    assert chunked.mean == pytest.approx(whole.mean, rel=1e-12)
    assert chunked.m2 == pytest.approx(whole.m2, rel=1e-10)


def test_zero_count_is_empty(synthetic_sampler):
    session = HierarchySampler(synthetic_sampler, seed=0)
    assert session.generate(0, 0).count == 0
    assert session.model_work == 0.0
