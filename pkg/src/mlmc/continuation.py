"""Continuation MLMC: solve a decreasing sequence of tolerances, recalibrating the
error models after every sampling pass, until the target tolerance is met.
"""
import math
from typing import List, Optional, Tuple

import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from samplers.base import CoupledSampler
from shared.errors import ConfigError, IterationLimitError, ToleranceUnreachableError
from shared.models import MeshHierarchy, ModelParams, bias_model, model_variance

from .calibration import RatePrior, VariancePriorConfig, calibrate, variance_estimates
from .estimator import (
    LevelStats,
    empty_levels,
    estimator_value,
    estimator_variance,
    level_stats_to_dict,
    merge,
    optimal_samples,
    optimal_theta,
    predicted_work,
    total_error_estimate,
)
from .records import IterationTrace, ParamsSnapshot, RunRecord
from .sampling import HierarchySampler

logger = structlog.get_logger(__name__)

ALGORITHM = "cmlmc"


class InitialLevel(BaseModel):
    model_config = ConfigDict(frozen=True)

    mesh_size: float = Field(gt=0)
    samples: int = Field(ge=2)


class ContinuationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: float = Field(gt=0)
    tol_max: float = Field(default=0.1, gt=0)
    r1: float = 2.0
    r2: float = 1.1
    c_alpha: float = Field(default=2.0, gt=0)
    l_inc: int = Field(default=2, ge=1)
    fit_levels: int = Field(default=5, ge=1)
    max_levels: int = Field(default=20, ge=2)
    reuse_samples: bool = False
    initial_hierarchy: List[InitialLevel] = Field(min_length=3)
    rate_prior: RatePrior
    var_prior: VariancePriorConfig = Field(default_factory=VariancePriorConfig)
    theta_min: float = Field(default=0.01, gt=0, lt=1)
    max_iterations: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def _check_schedule(self) -> "ContinuationConfig":
        if not self.r1 >= self.r2 > 1:
            raise ValueError(f"need r1 >= r2 > 1, got r1={self.r1}, r2={self.r2}")
        if self.tol > self.tol_max:
            raise ValueError(f"tol={self.tol} exceeds tol_max={self.tol_max}")
        return self


def schedule_iE(tol: float, tol_max: float, r1: float, r2: float) -> int:
    """Number of r1-steps from tol_max down to the target tolerance"""
    value = (-math.log(tol) + math.log(r2) + math.log(tol_max)) / math.log(r1)
    return max(0, int(math.floor(value)))


def iteration_tolerance(i: int, cfg: ContinuationConfig) -> float:
    i_e = schedule_iE(cfg.tol, cfg.tol_max, cfg.r1, cfg.r2)
    factor = cfg.r1 if i < i_e else cfg.r2
    return factor ** (i_e - i) * cfg.tol / cfg.r2


def tolerance_schedule(cfg: ContinuationConfig, count: Optional[int] = None) -> List[float]:
    """The first count tolerances of the continuation sequence (i_E + 1 by default)"""
    if count is None:
        count = schedule_iE(cfg.tol, cfg.tol_max, cfg.r1, cfg.r2) + 1
    return [iteration_tolerance(i, cfg) for i in range(count)]


def _candidate_variances(params: ModelParams, hier: MeshHierarchy, num_levels: int) -> List[float]:
    V = list(params.V[:num_levels + 1])
    for ell in range(len(V), num_levels + 1):
        V.append(model_variance(hier, params.QS, params.q2, ell))
    return V


def select_num_levels(tol_i: float, params: ModelParams, hier: MeshHierarchy, L_prev: int,
                      cfg: ContinuationConfig, level_cap: Optional[int] = None) -> int:
    """Exhaustive search of the level count minimizing predicted work"""
    cap = cfg.max_levels if level_cap is None else min(cfg.max_levels, level_cap)
    q1 = params.q1
    log_beta = math.log(hier.beta)
    l_min_real = (q1 * math.log(hier.h0) - math.log(tol_i / abs(params.QW))) / (q1 * log_beta)
    l_min = max(L_prev, int(math.ceil(l_min_real)))

    best_level, best_work = None, math.inf
    for num_levels in range(l_min, min(l_min + cfg.l_inc, cap) + 1):
        theta = optimal_theta(tol_i, hier, params.QW, q1, num_levels)
        if theta < cfg.theta_min:
            continue
        work = predicted_work(tol_i, theta, cfg.c_alpha, _candidate_variances(params, hier, num_levels),
                              hier.works(num_levels))
        if work < best_work:
            best_level, best_work = num_levels, work

    if best_level is None:
        raise ToleranceUnreachableError(
            f"no level count in [{l_min}, {min(l_min + cfg.l_inc, cap)}] reaches tol={tol_i:.3g}"
        )
    return best_level


def initial_levels(cfg: ContinuationConfig, hier: MeshHierarchy) -> List[Tuple[int, int]]:
    """Map the initial (mesh size, samples) pairs onto levels 0..n-1 of the hierarchy"""
    levels = []
    for index, entry in enumerate(cfg.initial_hierarchy):
        level = int(round(math.log(hier.h0 / entry.mesh_size) / math.log(hier.beta)))
        if level != index or abs(hier.mesh_size(level) - entry.mesh_size) > 1e-9 * entry.mesh_size:
            raise ConfigError(
                f"initial_hierarchy.{index}.mesh_size",
                f"{entry.mesh_size} is not h0*beta^-{index} for h0={hier.h0}, beta={hier.beta}",
            )
        levels.append((level, entry.samples))
    return levels


def _snapshot(params: ModelParams, converged: bool) -> ParamsSnapshot:
    return ParamsSnapshot(q1=params.q1, q2=params.q2, QW=params.QW, QW_star=params.qw_star,
                          QS=params.QS, V=list(params.V), rate_fit_converged=converged)


def _extend(stats: List[LevelStats], num_levels: int) -> List[LevelStats]:
    return stats + [LevelStats(level=ell) for ell in range(len(stats), num_levels + 1)]


def run_cmlmc(sampler: CoupledSampler, cfg: ContinuationConfig, seed: int) -> RunRecord:
    hier = sampler.hierarchy
    session = HierarchySampler(sampler, seed)
    log = logger.bind(algorithm=ALGORITHM, sampler=sampler.name, tol=cfg.tol, seed=seed)

    init = initial_levels(cfg, hier)
    num_levels = len(init) - 1
    all_stats = empty_levels(num_levels)
    for level, count in init:
        all_stats[level] = merge(all_stats[level], session.generate(level, count))

    params, rates = calibrate(all_stats, hier, cfg.rate_prior, cfg.var_prior, num_levels,
                              cfg.fit_levels, cfg.c_alpha)
    warnings = [] if rates.converged else ["rate_fit_fallback:initial"]
    i_e = schedule_iE(cfg.tol, cfg.tol_max, cfg.r1, cfg.r2)
    iterations: List[IterationTrace] = []
    log.info("cmlmc_started", i_e=i_e, initial_levels=num_levels, q1=params.q1, q2=params.q2)

    for i in range(cfg.max_iterations):
        tol_i = iteration_tolerance(i, cfg)
        num_levels = select_num_levels(tol_i, params, hier, num_levels, cfg, sampler.max_level)
        all_stats = _extend(all_stats, num_levels)

        V = variance_estimates(all_stats, params, cfg.var_prior, hier, num_levels)
        theta = optimal_theta(tol_i, hier, params.QW, params.q1, num_levels)
        bias_qw, bias_q1 = params.QW, params.q1
        M = optimal_samples(tol_i, theta, cfg.c_alpha, V, hier.works(num_levels))

        work_before, cost_before = session.model_work, session.measured_cost
        if cfg.reuse_samples:
            for level, target in enumerate(M):
                extra = target - all_stats[level].count
                if extra > 0:
                    all_stats[level] = merge(all_stats[level], session.generate(level, extra))
            iter_stats = list(all_stats)
        else:
            iter_stats = [session.generate(level, target) for level, target in enumerate(M)]
            all_stats = [merge(old, new) for old, new in zip(all_stats, iter_stats)]

        params, rates = calibrate(all_stats, hier, cfg.rate_prior, cfg.var_prior, num_levels,
                                  cfg.fit_levels, cfg.c_alpha)
        if not rates.converged:
            warnings.append(f"rate_fit_fallback:{i}")

        counts = [s.count for s in iter_stats]
        var_a = estimator_variance(params.V, counts)
        bias = bias_model(hier, params.QW, params.q1, num_levels)
        error = total_error_estimate(bias, var_a, cfg.c_alpha)
        estimate = estimator_value(iter_stats)

        iterations.append(IterationTrace(
            index=i,
            tol=tol_i,
            num_levels=num_levels,
            theta=theta,
            bias_qw=bias_qw,
            bias_q1=bias_q1,
            samples=counts,
            params=_snapshot(params, rates.converged),
            estimate=estimate,
            bias=bias,
            statistical_error=error - bias,
            error_estimate=error,
            model_work=session.model_work - work_before,
            measured_cost=session.measured_cost - cost_before,
        ))
        log.info("cmlmc_iteration", index=i, tol_i=tol_i, num_levels=num_levels, theta=theta,
                 estimate=estimate, error_estimate=error, q1=params.q1, q2=params.q2, qw=params.QW)

        if i >= i_e and error <= cfg.tol:
            log.info("cmlmc_converged", iterations=i + 1, num_levels=num_levels, error_estimate=error)
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
                theta_final=theta,
                iterations=iterations,
                total_model_work=session.model_work,
                total_measured_cost=session.measured_cost,
                samples_final=counts,
                level_stats=[level_stats_to_dict(s, include_cost=False) for s in iter_stats],
                warnings=warnings,
            )

    raise IterationLimitError(f"no convergence to tol={cfg.tol} within {cfg.max_iterations} iterations")
