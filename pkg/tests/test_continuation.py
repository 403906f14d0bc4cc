import math
from concurrent.futures import ThreadPoolExecutor

import pytest

from mlmc.calibration import RatePrior
from mlmc.continuation import (
    ContinuationConfig,
    InitialLevel,
    initial_levels,
    iteration_tolerance,
    run_cmlmc,
    schedule_iE,
    select_num_levels,
    tolerance_schedule,
)
from shared.errors import ConfigError, IterationLimitError, ToleranceUnreachableError
from shared.models import ModelParams, bias_model


def make_config(tol, **overrides):
    values = dict(
        tol=tol,
        tol_max=0.1,
        initial_hierarchy=[InitialLevel(mesh_size=2.0 ** -ell, samples=10) for ell in range(3)],
        rate_prior=RatePrior.from_rates(1.0, 1.0, 1.0, 1.0),
    )
    values.update(overrides)
    return ContinuationConfig(**values)


def test_schedule_iE():
    assert schedule_iE(0.01, 0.1, 2.0, 1.1) == 3
    assert schedule_iE(0.05, 0.5, 2.0, 1.1) == 3
    assert schedule_iE(0.1, 0.1, 2.0, 1.1) == 0


def test_iteration_tolerance():
    cfg = make_config(0.01)
    assert iteration_tolerance(0, cfg) == pytest.approx(8 * 0.01 / 1.1)
    assert iteration_tolerance(0, cfg) == pytest.approx(0.0727, abs=1e-4)
    assert iteration_tolerance(3, cfg) == pytest.approx(0.01 / 1.1)
    assert iteration_tolerance(5, cfg) == pytest.approx(0.01 / 1.1 ** 3)
    assert iteration_tolerance(5, cfg) == pytest.approx(0.00751, abs=1e-5)


def test_tolerance_schedule_decreases_to_target():
    cfg = make_config(0.01)
    schedule = tolerance_schedule(cfg)
    assert len(schedule) == 4
    assert all(a > b for a, b in zip(schedule, schedule[1:]))
    assert schedule[-1] < cfg.tol
    assert len(tolerance_schedule(cfg, 7)) == 7


def test_config_validation():
    with pytest.raises(ValueError):
        make_config(0.01, r1=1.05, r2=1.1)
    with pytest.raises(ValueError):
        make_config(0.5)
    with pytest.raises(ValueError):
        make_config(0.01, initial_hierarchy=[InitialLevel(mesh_size=1.0, samples=10)])
    with pytest.raises(ValueError):
        InitialLevel(mesh_size=1.0, samples=1)


def test_select_num_levels(unit_hierarchy):
    """Work is minimized over the window of l_inc levels above the bias bound"""
    params = ModelParams(q1=1.0, q2=1.0, QW=1.0, QS=1.0)
    cfg = make_config(0.01)
    assert select_num_levels(0.1, params, unit_hierarchy, 2, cfg) == 6
    assert select_num_levels(0.1, params, unit_hierarchy, 2, make_config(0.01, l_inc=1)) == 5
    assert select_num_levels(0.1, params, unit_hierarchy, 7, cfg) == 7


def test_select_num_levels_unreachable(unit_hierarchy):
    params = ModelParams(q1=1.0, q2=1.0, QW=1.0, QS=1.0)
    with pytest.raises(ToleranceUnreachableError):
        select_num_levels(0.1, params, unit_hierarchy, 2, make_config(0.01), level_cap=3)


def test_initial_levels_must_follow_hierarchy(unit_hierarchy):
    cfg = make_config(0.01)
    assert initial_levels(cfg, unit_hierarchy) == [(0, 10), (1, 10), (2, 10)]

    bad = make_config(0.01, initial_hierarchy=[InitialLevel(mesh_size=h, samples=10) for h in (1.0, 0.3, 0.25)])
    with pytest.raises(ConfigError) as exc:
        initial_levels(bad, unit_hierarchy)
    assert exc.value.field_path == "initial_hierarchy.1.mesh_size"


def test_run_converges_on_synthetic(synthetic_sampler):
    cfg = make_config(0.05)
    record = run_cmlmc(synthetic_sampler, cfg, seed=7)
    i_e = schedule_iE(cfg.tol, cfg.tol_max, cfg.r1, cfg.r2)

    assert record.succeeded
    assert record.error_estimate <= cfg.tol
    assert len(record.iterations) >= i_e + 1
    assert record.final_L == record.iterations[-1].num_levels
    levels = [it.num_levels for it in record.iterations]
    assert levels == sorted(levels)
    for i, it in enumerate(record.iterations):
        assert it.tol == pytest.approx(iteration_tolerance(i, cfg))
        assert len(it.samples) == it.num_levels + 1


def test_splitting_identity_holds_every_iteration(synthetic_sampler):
    """(1 - theta) * tol_i equals the bias model used for the split"""
    record = run_cmlmc(synthetic_sampler, make_config(0.02), seed=11)
    hier = synthetic_sampler.hierarchy
    for it in record.iterations:
        bias = bias_model(hier, it.bias_qw, it.bias_q1, it.num_levels)
        assert (1 - it.theta) * it.tol == pytest.approx(bias, rel=1e-12)


def test_reuse_mode_converges(synthetic_sampler):
    record = run_cmlmc(synthetic_sampler, make_config(0.05, reuse_samples=True), seed=7)
    assert record.error_estimate <= 0.05
    counts = [it.samples[0] for it in record.iterations]
    assert counts == sorted(counts)


def test_run_is_reproducible_across_threads(synthetic_sampler):
    """Same seed gives the same record whether runs are serial or concurrent"""
    cfg = make_config(0.05)
    serial = run_cmlmc(synthetic_sampler, cfg, seed=42).deterministic_payload()
    with ThreadPoolExecutor(max_workers=4) as pool:
        parallel = list(pool.map(lambda _: run_cmlmc(synthetic_sampler, cfg, 42), range(4)))
    assert all(r.deterministic_payload() == serial for r in parallel)
    assert run_cmlmc(synthetic_sampler, cfg, seed=43).deterministic_payload() != serial


def test_iteration_limit(synthetic_sampler):
    with pytest.raises(IterationLimitError):
        run_cmlmc(synthetic_sampler, make_config(0.02, max_iterations=1), seed=0)


def test_gbm_single_run(gbm_sampler):
    record = run_cmlmc(gbm_sampler, make_config(0.1), seed=5)
    assert record.error_estimate <= 0.1
    assert math.isfinite(record.estimate)
    assert record.sampler["name"] == "gbm"
    assert record.total_model_work == pytest.approx(sum(it.model_work for it in record.iterations)
                                                    + 10 * (1 + 2 + 4))
