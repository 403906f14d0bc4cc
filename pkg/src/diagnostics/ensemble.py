"""Ensemble diagnostics over stored run records: error-versus-tolerance tables,
complexity-rate fits, normality of the normalized errors and per-level accuracy
of the variance and weak-constant estimates.
"""
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats as sp_stats

from mlmc.estimator import LevelStats
from mlmc.records import RunRecord
from shared.errors import InsufficientSamplesError
from shared.models import MeshHierarchy

KS_CRITICAL_1PCT = 1.63
MIN_NORMALITY_RUNS = 20


class EnsembleSummary(BaseModel):
    tol: float
    runs: int
    failed: int = 0
    errors: List[float] = Field(default_factory=list)
    error_estimates: List[float] = Field(default_factory=list)
    works: List[float] = Field(default_factory=list)
    measured_costs: List[float] = Field(default_factory=list)
    percentiles: Tuple[float, float, float]
    exceed_fraction: float
    ks_statistic: Optional[float] = None
    fitted_complexity: Optional[Tuple[float, float]] = None

    @property
    def median_work(self) -> float:
        return self.percentiles[1]


class ComplexityFit(BaseModel):
    s1_hat: float
    s2: float
    residual: float


class NormalityReport(BaseModel):
    ks_statistic: float
    critical_value: float
    passed: bool
    normalized_errors: List[float]
    normal_quantiles: List[float]
    excluded: int = 0
    degenerate: bool = False


class LevelAccuracy(BaseModel):
    level: int
    count: int
    variance: float
    kurtosis: Optional[float] = None
    variance_rel_error_sq: Optional[float] = None
    qw_factor: float


def work_percentiles(works: Sequence[float]) -> Tuple[float, float, float]:
    p5, p50, p95 = np.percentile(np.asarray(works, dtype=float), [5, 50, 95])
    return float(p5), float(p50), float(p95)


def confidence_table(records: Sequence[RunRecord], reference: float, tol: float) -> EnsembleSummary:
    """Errors against the reference and how often they exceed the tolerance"""
    done = [r for r in records if r.succeeded]
    if not done:
        raise ValueError(f"no successful runs at tol={tol}")

    errors = [r.estimate - reference for r in done]
    works = [r.total_model_work for r in done]
    exceeded = sum(1 for e in errors if abs(e) > tol)

    ks = None
    if len(done) >= MIN_NORMALITY_RUNS:
        ks = normality_check(done, reference).ks_statistic

    return EnsembleSummary(
        tol=tol,
        runs=len(done),
        failed=len(records) - len(done),
        errors=errors,
        error_estimates=[r.error_estimate for r in done],
        works=works,
        measured_costs=[r.total_measured_cost for r in done],
        percentiles=work_percentiles(works),
        exceed_fraction=exceeded / len(done),
        ks_statistic=ks,
    )


def expected_complexity(q1: float, q2: float, gamma: float) -> Tuple[float, float]:
    """(s1, s2) of the MLMC work bound tol**(-s1) * |log tol|**s2 for the given rates"""
    if math.isclose(q2, gamma, rel_tol=1e-9):
        return 2.0, 2.0
    if q2 > gamma:
        return 2.0, 0.0
    return 2.0 + (gamma - q2) / q1, 0.0


def complexity_fit(summaries: Sequence[EnsembleSummary], s2: float) -> ComplexityFit:
    """Fit median work ~ tol**(-s1) * |log tol|**s2 with s2 held fixed"""
    tols = np.array([s.tol for s in summaries], dtype=float)
    if np.unique(tols).size < 3:
        raise ValueError("complexity fit needs at least three distinct tolerances")
    median_work = np.array([s.median_work for s in summaries], dtype=float)

    x = -np.log(tols)
    y = np.log(median_work) - s2 * np.log(np.abs(np.log(tols)))
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return ComplexityFit(s1_hat=float(slope), s2=s2, residual=residual)


def normality_of(values: Sequence[float], excluded: int = 0) -> NormalityReport:
    """KS distance of normalized errors to the standard normal plus QQ data"""
    e = np.sort(np.asarray(values, dtype=float))
    n = e.size
    if n == 0:
        raise ValueError("no normalized errors to test")
    ks = float(sp_stats.kstest(e, "norm").statistic)
    critical = KS_CRITICAL_1PCT / math.sqrt(n)
    quantiles = sp_stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return NormalityReport(
        ks_statistic=ks,
        critical_value=critical,
        passed=ks < critical,
        normalized_errors=e.tolist(),
        normal_quantiles=quantiles.tolist(),
        excluded=excluded,
        degenerate=bool(np.ptp(e) == 0),
    )


def normality_check(records: Sequence[RunRecord], reference: float) -> NormalityReport:
    """Normalize (A - reference) by the estimated standard deviation of A"""
    values, excluded = [], 0
    for record in records:
        variance = record.estimator_variance
        if not record.succeeded or variance is None or variance <= 0:
            excluded += 1
            continue
        values.append((record.estimate - reference) / math.sqrt(variance))
    return normality_of(values, excluded=excluded)


def estimator_accuracy_diag(stats: Sequence[LevelStats], hier: MeshHierarchy,
                            q1: float, q2: float) -> List[LevelAccuracy]:
    """Squared relative error of each sample variance and the weak-constant error factor"""
    report = []
    for level_stats in stats:
        n = level_stats.count
        if n < 4:
            raise InsufficientSamplesError(level_stats.level, 4, n)
        variance = level_stats.m2 / n
        kurtosis, rel_sq = None, None
        if variance > 0:
            kurtosis = (level_stats.m4 / n) / variance ** 2
            rel_sq = (n - 1) ** 2 / n ** 3 * (kurtosis - (n - 3) / (n - 1))
        qw_factor = math.exp(level_stats.level * (2 * q1 - q2) * math.log(hier.beta)) / n
        report.append(LevelAccuracy(level=level_stats.level, count=n, variance=variance,
                                    kurtosis=kurtosis, variance_rel_error_sq=rel_sq, qw_factor=qw_factor))
    return report
