"""Bayesian calibration of the level variances and of the (q1, q2, QW, QS) error models.

Level variances use a normal-gamma prior centred on the current model. QW and QS
come from a weighted least-squares fit over the deepest levels. The rates are the
maximizer of the profiled likelihood times a Gaussian prior on the unconstrained
parameters x0 = log(q1) and x1 = log(2*q1 - q2).
"""
import math
from typing import List, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize

from shared.errors import CalibrationUnavailableError, InsufficientSamplesError
from shared.metrics import RATE_FIT_FALLBACKS, VARIANCE_CLAMPED
from shared.models import MeshHierarchy, ModelParams, model_mean, model_variance, strong_term, weak_term

from .estimator import LevelStats, sample_variance

logger = structlog.get_logger(__name__)

QS_RELATIVE_FLOOR = 1e-3
QS_ABSOLUTE_FLOOR = 1e-30
VARIANCE_FLOOR = 1e-300
RESIDUAL_FLOOR = 1e-300
LOG_PENALTY = -1e12

OPTIMIZER_MAXFEV = 200
OPTIMIZER_XATOL = 1e-4
# convergence is judged on the simplex diameter alone
OPTIMIZER_FATOL = math.inf
RESTART_OFFSET = 0.5


class RatePrior(BaseModel):
    """Gaussian prior on x0 = log(q1) and x1 = log(2*q1 - q2)"""

    model_config = ConfigDict(frozen=True)

    x0_hat: float
    x1_hat: float
    sigma0: float = Field(gt=0)
    sigma1: float = Field(gt=0)

    @classmethod
    def from_rates(cls, q1: float, q2: float, sigma0: float = 0.5, sigma1: float = 0.5) -> "RatePrior":
        x0, x1 = rates_to_unconstrained(q1, q2)
        return cls(x0_hat=x0, x1_hat=x1, sigma0=sigma0, sigma1=sigma1)

    def mode(self) -> Tuple[float, float]:
        return unconstrained_to_rates(self.x0_hat, self.x1_hat)


class VariancePriorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa0: float = Field(default=0.1, gt=0)
    kappa1: float = Field(default=0.1, gt=0)


class RateFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    q1: float
    q2: float
    converged: bool = True


def rates_to_unconstrained(q1: float, q2: float) -> Tuple[float, float]:
    if q1 <= 0 or not 0 < q2 < 2 * q1:
        raise ValueError(f"need q1 > 0 and 0 < q2 < 2*q1, got q1={q1}, q2={q2}")
    return math.log(q1), math.log(2 * q1 - q2)


def unconstrained_to_rates(x0: float, x1: float) -> Tuple[float, float]:
    q1 = math.exp(x0)
    return q1, 2 * q1 - math.exp(x1)


def _data_levels(stats: Sequence[LevelStats], l0: int, num_levels: int) -> List[LevelStats]:
    """Levels in [l0, L] that carry at least one sample"""
    upper = min(num_levels, len(stats) - 1)
    return [stats[ell] for ell in range(max(l0, 0), upper + 1) if stats[ell].count > 0]


def variance_posterior(stats: LevelStats, params: ModelParams, cfg: VariancePriorConfig,
                       hier: MeshHierarchy, level: int) -> float:
    """Posterior variance estimate for a level l >= 1 under the normal-gamma prior"""
    if level < 1:
        raise ValueError("level 0 uses the plain sample variance")
    if stats.count == 0:
        return model_variance(hier, params.QS, params.q2, level)

    mu_hat = model_mean(hier, params.weak_constant, params.q1, level)
    lambda_hat = strong_term(hier, params.q2, level) / params.QS
    n = stats.count

    ups3 = 0.5 + cfg.kappa1 * lambda_hat + n / 2.0
    ups4 = (cfg.kappa1
            + 0.5 * stats.m2
            + cfg.kappa0 * n * (stats.mean - mu_hat) ** 2 / (2.0 * (cfg.kappa0 + n)))
    return ups4 / (ups3 - 0.5)


def variance_estimates(stats: Sequence[LevelStats], params: ModelParams, cfg: VariancePriorConfig,
                       hier: MeshHierarchy, num_levels: int) -> List[float]:
    """V_l for levels 0..L; levels without data fall back to the model"""
    if len(stats) == 0:
        raise InsufficientSamplesError(0, 2, 0)
    v0 = sample_variance(stats[0])
    if v0 < VARIANCE_FLOOR:
        VARIANCE_CLAMPED.labels(where="level0_variance").inc()
        v0 = VARIANCE_FLOOR

    estimates = [v0]
    for ell in range(1, num_levels + 1):
        level_stats = stats[ell] if ell < len(stats) else LevelStats(level=ell)
        v = variance_posterior(level_stats, params, cfg, hier, ell)
        estimates.append(max(v, VARIANCE_FLOOR))
    return estimates


def _weighted_fit(levels: Sequence[LevelStats], hier: MeshHierarchy,
                  q1: float, q2: float) -> Tuple[float, float, float, int]:
    """Return (QW*, residual sum R, sum of M w^2 s, total count)"""
    w = np.array([weak_term(hier, q1, s.level) for s in levels])
    s = np.array([strong_term(hier, q2, st.level) for st in levels])
    n = np.array([st.count for st in levels], dtype=float)
    means = np.array([st.mean for st in levels])
    m2 = np.array([st.m2 for st in levels])

    denom = float(np.sum(n * w * w * s))
    qw = float(np.sum(w * s * n * means)) / denom
    # sum_m (G - QW w)^2 written through the central sums
    residual = float(np.sum(s * (m2 + n * (means - qw * w) ** 2)))
    return qw, residual, denom, int(n.sum())


def fit_qw_qs(stats: Sequence[LevelStats], hier: MeshHierarchy, q1: float, q2: float,
              l0: int, num_levels: int) -> Tuple[float, float]:
    if l0 < 1:
        raise ValueError(f"l0 must be at least 1, got {l0}")
    levels = _data_levels(stats, l0, num_levels)
    if not levels:
        raise CalibrationUnavailableError(f"no samples on levels {l0}..{num_levels}")

    qw, residual, _, total = _weighted_fit(levels, hier, q1, q2)
    qs = residual / total

    floor = QS_ABSOLUTE_FLOOR
    first = next((st for st in levels if st.count >= 2), None)
    if first is not None:
        floor = max(floor, QS_RELATIVE_FLOOR * sample_variance(first) * strong_term(hier, q2, first.level))
    if qs < floor:
        VARIANCE_CLAMPED.labels(where="qs_floor").inc()
        qs = floor
    return qw, qs


def qw_posterior_sd(stats: Sequence[LevelStats], hier: MeshHierarchy, q1: float, q2: float,
                    QS: float, l0: int, num_levels: int) -> float:
    levels = _data_levels(stats, l0, num_levels)
    if not levels:
        raise CalibrationUnavailableError(f"no samples on levels {l0}..{num_levels}")
    denom = sum(st.count * weak_term(hier, q1, st.level) ** 2 * strong_term(hier, q2, st.level)
                for st in levels)
    return math.sqrt(QS / denom)


def qw_worst_case(qw_star: float, sd: float, c_alpha: float) -> float:
    """Move QW* away from zero by c_alpha posterior standard deviations"""
    sign = 1.0 if qw_star >= 0 else -1.0
    return qw_star + sign * c_alpha * sd


def _log_prior(x0: float, x1: float, prior: RatePrior) -> float:
    return (-0.5 * ((x0 - prior.x0_hat) / prior.sigma0) ** 2
            - 0.5 * ((x1 - prior.x1_hat) / prior.sigma1) ** 2)


def rate_log_posterior(x0: float, x1: float, stats: Sequence[LevelStats], hier: MeshHierarchy,
                       prior: RatePrior, l0: int, num_levels: int) -> float:
    """Profiled log posterior of the rates, up to a constant"""
    if l0 < 1 or l0 > num_levels:
        raise CalibrationUnavailableError(f"empty level range {l0}..{num_levels}")

    log_prior = _log_prior(x0, x1, prior)
    if not (math.isfinite(x0) and math.isfinite(x1)) or x0 > 50 or x1 > 50:
        return LOG_PENALTY
    q1, q2 = unconstrained_to_rates(x0, x1)
    if q2 <= 0:
        # distance into the infeasible region keeps the simplex moving back
        return LOG_PENALTY * (1.0 + (-q2))

    levels = _data_levels(stats, l0, num_levels)
    if not levels:
        return log_prior

    _, residual, _, total = _weighted_fit(levels, hier, q1, q2)
    if not residual > RESIDUAL_FLOOR:
        VARIANCE_CLAMPED.labels(where="rate_likelihood").inc()
        residual = RESIDUAL_FLOOR

    log_s = sum(st.count * math.log(strong_term(hier, q2, st.level)) for st in levels)
    log_lik = -0.5 * total * math.log(residual / total) + 0.5 * log_s
    return log_lik + log_prior


def fit_rates(stats: Sequence[LevelStats], hier: MeshHierarchy, prior: RatePrior,
              num_levels: int, l0: int = 1) -> RateFit:
    """Maximize the rate posterior with a few restarted Nelder-Mead searches"""
    mode = prior.mode()
    if not _data_levels(stats, l0, num_levels):
        return RateFit(q1=mode[0], q2=mode[1], converged=True)

    def objective(x: np.ndarray) -> float:
        return -rate_log_posterior(float(x[0]), float(x[1]), stats, hier, prior, l0, num_levels)

    starts = [
        (prior.x0_hat, prior.x1_hat),
        (prior.x0_hat + RESTART_OFFSET * prior.sigma0, prior.x1_hat - RESTART_OFFSET * prior.sigma1),
        (prior.x0_hat - RESTART_OFFSET * prior.sigma0, prior.x1_hat + RESTART_OFFSET * prior.sigma1),
    ]

    best = None
    for start in starts:
        options = {"maxfev": OPTIMIZER_MAXFEV, "xatol": OPTIMIZER_XATOL, "fatol": OPTIMIZER_FATOL}
        result = minimize(objective, np.array(start), method="Nelder-Mead", options=options)
        if not result.success or not np.isfinite(result.fun):
            continue
        if best is None or result.fun < best.fun:
            best = result

    if best is not None:
        q1, q2 = unconstrained_to_rates(float(best.x[0]), float(best.x[1]))
        if q2 > 0:
            return RateFit(q1=q1, q2=min(q2, 2 * q1 * (1 - 1e-12)), converged=True)

    RATE_FIT_FALLBACKS.inc()
    logger.warning("rate_fit_fallback", num_levels=num_levels, q1=mode[0], q2=mode[1])
    return RateFit(q1=mode[0], q2=mode[1], converged=False)


def calibrate(stats: Sequence[LevelStats], hier: MeshHierarchy, rate_prior: RatePrior,
              var_prior: VariancePriorConfig, num_levels: int, fit_levels: int,
              c_alpha: float) -> Tuple[ModelParams, RateFit]:
    """Full calibration pass over the accumulated statistics of levels 0..L"""
    rates = fit_rates(stats, hier, rate_prior, num_levels)
    l0 = max(1, num_levels - fit_levels)
    qw_star, qs = fit_qw_qs(stats, hier, rates.q1, rates.q2, l0, num_levels)
    sd = qw_posterior_sd(stats, hier, rates.q1, rates.q2, qs, l0, num_levels)
    qw = qw_worst_case(qw_star, sd, c_alpha)

    params = ModelParams(q1=rates.q1, q2=rates.q2, QW=qw, QS=qs, qw_star=qw_star)
    V = variance_estimates(stats, params, var_prior, hier, num_levels)
    logger.debug("calibrated", q1=rates.q1, q2=rates.q2, qw=qw, qw_star=qw_star, qs=qs, l0=l0)
    return params.model_copy(update={"V": V}), rates
