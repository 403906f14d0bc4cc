"""Standard MLMC: add one level at a time with a fixed error split and pilot samples,
stopping once the bias estimate from the last two levels and the statistical error
fit inside the tolerance.
"""
import math
from typing import List, Optional, Sequence

import structlog
from pydantic import BaseModel, ConfigDict, Field

from samplers.base import CoupledSampler
from shared.errors import EstimateUndefinedError, ToleranceUnreachableError
from shared.models import MeshHierarchy, bias_model, weak_term

from .estimator import (
    LevelStats,
    estimator_value,
    level_stats_to_dict,
    merge,
    optimal_samples,
    sample_mean,
    sample_variance,
    total_error_estimate,
)
from .records import IterationTrace, RunRecord
from .sampling import HierarchySampler

logger = structlog.get_logger(__name__)

ALGORITHM = "smlmc"


class StandardConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(gt=0)
    m_tilde: int = Field(default=25, ge=1)
    theta: float = Field(default=0.5, gt=0, lt=1)
    q1: Optional[float] = Field(default=None, gt=0)
    c_alpha: float = Field(default=2.0, gt=0)
    reuse_samples: bool = True
    max_levels: int = Field(default=20, ge=2)


def qw_estimate_std(stats_L: LevelStats, stats_prev: LevelStats, hier: MeshHierarchy,
                    q1: float, num_levels: int) -> float:
    """Weak constant from the means of the last two levels"""
    if num_levels < 2:
        raise EstimateUndefinedError(f"need at least three levels, have L={num_levels}")
    extrapolated = max(abs(sample_mean(stats_L)),
                       abs(sample_mean(stats_prev)) * math.exp(-q1 * math.log(hier.beta)))
    return extrapolated / weak_term(hier, q1, num_levels)


def statistical_variance(stats: Sequence[LevelStats]) -> float:
    return sum(sample_variance(s) / s.count for s in stats)


def error_estimate_std(qw_hat: float, hier: MeshHierarchy, q1: float, num_levels: int,
                       stats: Sequence[LevelStats], c_alpha: float) -> float:
    if num_levels < 2:
        raise EstimateUndefinedError(f"need at least three levels, have L={num_levels}")
    return total_error_estimate(bias_model(hier, qw_hat, q1, num_levels), statistical_variance(stats), c_alpha)


def run_smlmc(sampler: CoupledSampler, cfg: StandardConfig, seed: int) -> RunRecord:
    hier = sampler.hierarchy
    q1 = cfg.q1 if cfg.q1 is not None else sampler.nominal_q1
    cap = cfg.max_levels if sampler.max_level is None else min(cfg.max_levels, sampler.max_level)
    session = HierarchySampler(sampler, seed)
    pilot = max(2, cfg.m_tilde)
    log = logger.bind(algorithm=ALGORITHM, sampler=sampler.name, tol=cfg.tol, seed=seed)

    all_stats: List[LevelStats] = []
    iterations: List[IterationTrace] = []
    num_levels = 0
    while num_levels <= cap:
        work_before, cost_before = session.model_work, session.measured_cost
        all_stats.append(session.generate(num_levels, pilot))

        V = [sample_variance(s) for s in all_stats]
        M = optimal_samples(cfg.tol, cfg.theta, cfg.c_alpha, V, hier.works(num_levels), min_samples=2)

        if cfg.reuse_samples:
            for level, target in enumerate(M):
                extra = target - all_stats[level].count
                if extra > 0:
                    all_stats[level] = merge(all_stats[level], session.generate(level, extra))
            iter_stats = list(all_stats)
        else:
            iter_stats = [session.generate(level, target) for level, target in enumerate(M)]
            all_stats = [merge(old, new) for old, new in zip(all_stats, iter_stats)]

        estimate = estimator_value(iter_stats)
        var_a = statistical_variance(iter_stats)
        qw_hat, bias, error = None, None, None
        if num_levels >= 2:
            qw_hat = qw_estimate_std(iter_stats[-1], iter_stats[-2], hier, q1, num_levels)
            bias = bias_model(hier, qw_hat, q1, num_levels)
            error = error_estimate_std(qw_hat, hier, q1, num_levels, iter_stats, cfg.c_alpha)

        iterations.append(IterationTrace(
            index=num_levels,
            tol=cfg.tol,
            num_levels=num_levels,
            theta=cfg.theta,
            bias_qw=qw_hat,
            bias_q1=q1,
            samples=[s.count for s in iter_stats],
            estimate=estimate,
            bias=bias,
            statistical_error=cfg.c_alpha * math.sqrt(var_a),
            error_estimate=error,
            model_work=session.model_work - work_before,
            measured_cost=session.measured_cost - cost_before,
        ))
        log.info("smlmc_level_added", num_levels=num_levels, estimate=estimate, error_estimate=error)

        if error is not None and error <= cfg.tol:
            log.info("smlmc_converged", num_levels=num_levels, error_estimate=error)
            return RunRecord(
                algorithm=ALGORITHM,
                sampler=sampler.describe(),
                tol=cfg.tol,
                seed=seed,
                estimate=estimate,
                error_estimate=error,
                estimator_variance=var_a,
                bias_estimate=bias,
                final_L=num_levels,
                theta_final=cfg.theta,
                iterations=iterations,
                total_model_work=session.model_work,
                total_measured_cost=session.measured_cost,
                samples_final=[s.count for s in iter_stats],
                level_stats=[level_stats_to_dict(s, include_cost=False) for s in iter_stats],
            )
        num_levels += 1

    raise ToleranceUnreachableError(f"no convergence to tol={cfg.tol} within {cap} levels")
