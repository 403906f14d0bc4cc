"""Per-level running statistics, the MLMC estimator and optimal sample allocation.

Statistics are kept as the count, the running mean and the central sums of orders
2 to 4 and merged with the pairwise update formulas, which stay accurate when the
level mean is large compared to its spread. Raw power sums s1..s4 are derived on
demand. Variances divide by the sample count.
"""
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy.stats import norm

from shared.errors import InsufficientSamplesError, InvalidSplitError, SamplingFailureError
from shared.models import MeshHierarchy, bias_model


@dataclass(frozen=True)
class LevelStats:
    level: int = 0
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0
    cost: float = 0.0

    @property
    def s1(self) -> float:
        return self.count * self.mean

    @property
    def s2(self) -> float:
        return self.m2 + self.count * self.mean ** 2

    @property
    def s3(self) -> float:
        mu = self.mean
        return self.m3 + 3 * mu * self.m2 + self.count * mu ** 3

    @property
    def s4(self) -> float:
        mu = self.mean
        return self.m4 + 4 * mu * self.m3 + 6 * mu ** 2 * self.m2 + self.count * mu ** 4

    def add_sample(self, g: float, cost: float = 0.0) -> "LevelStats":
        return add_sample(self, g, cost)

    def add_batch(self, values: np.ndarray, cost: float = 0.0) -> "LevelStats":
        return add_batch(self, values, cost)

    def merge(self, other: "LevelStats") -> "LevelStats":
        return merge(self, other)


@dataclass(frozen=True)
class Allocation:
    M: List[int]
    theta: float
    predicted_work: float


def empty_levels(num_levels: int) -> List[LevelStats]:
    """Fresh statistics for levels 0..L"""
    return [LevelStats(level=ell) for ell in range(num_levels + 1)]


def merge(a: LevelStats, b: LevelStats) -> LevelStats:
    if b.count == 0:
        return replace(a, cost=a.cost + b.cost)
    if a.count == 0:
        return replace(b, level=a.level, cost=a.cost + b.cost)

    na, nb = a.count, b.count
    n = na + nb
    delta = b.mean - a.mean
    delta_n = delta / n

    mean = a.mean + nb * delta_n
    m2 = a.m2 + b.m2 + delta * delta_n * na * nb
    m3 = (a.m3 + b.m3
          + delta * delta_n ** 2 * na * nb * (na - nb)
          + 3 * delta_n * (na * b.m2 - nb * a.m2))
    m4 = (a.m4 + b.m4
          + delta * delta_n ** 3 * na * nb * (na * na - na * nb + nb * nb)
          + 6 * delta_n ** 2 * (na * na * b.m2 + nb * nb * a.m2)
          + 4 * delta_n * (na * b.m3 - nb * a.m3))
    return LevelStats(level=a.level, count=n, mean=mean, m2=max(m2, 0.0), m3=m3,
                      m4=max(m4, 0.0), cost=a.cost + b.cost)


def add_batch(stats: LevelStats, values: np.ndarray, cost: float = 0.0) -> LevelStats:
    """Accumulate a batch of coupled differences in one pass"""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        return replace(stats, cost=stats.cost + cost)
    if not np.all(np.isfinite(values)):
        raise SamplingFailureError(stats.level)
    mu = float(values.mean())
    dev = values - mu
    dev2 = dev * dev
    batch = LevelStats(
        level=stats.level,
        count=int(values.size),
        mean=mu,
        m2=float(dev2.sum()),
        m3=float((dev2 * dev).sum()),
        m4=float((dev2 * dev2).sum()),
        cost=cost,
    )
    return merge(stats, batch)


def add_sample(stats: LevelStats, g: float, cost: float = 0.0) -> LevelStats:
    if not math.isfinite(g):
        raise SamplingFailureError(stats.level)
    return add_batch(stats, np.array([g]), cost)


def sample_mean(stats: LevelStats) -> float:
    if stats.count < 1:
        raise InsufficientSamplesError(stats.level, 1, stats.count)
    return stats.mean


def sample_variance(stats: LevelStats) -> float:
    if stats.count < 2:
        raise InsufficientSamplesError(stats.level, 2, stats.count)
    return max(stats.m2 / stats.count, 0.0)


def central_moment(stats: LevelStats, order: int) -> float:
    """Biased central moment of order 2, 3 or 4"""
    if stats.count < 1:
        raise InsufficientSamplesError(stats.level, 1, stats.count)
    sums = {2: stats.m2, 3: stats.m3, 4: stats.m4}
    if order not in sums:
        raise ValueError(f"central moments of order 2..4 only, got {order}")
    return sums[order] / stats.count


def optimal_theta(tol: float, hier: MeshHierarchy, QW: float, q1: float, num_levels: int) -> float:
    """Split that makes the bias model equal (1 - theta) * tol; not clamped"""
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    return 1.0 - bias_model(hier, QW, q1, num_levels) / tol


def _check_allocation_inputs(theta: float, V: Sequence[float], W: Sequence[float]):
    if not 0.0 < theta < 1.0:
        raise InvalidSplitError(theta)
    v = np.asarray(V, dtype=float)
    w = np.asarray(W, dtype=float)
    if v.shape != w.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("V and W must be nonempty and of equal length")
    if np.any(v < 0) or np.any(w <= 0):
        raise ValueError("V must be nonnegative and W positive")
    return v, w


def optimal_samples_real(tol: float, theta: float, c_alpha: float,
                         V: Sequence[float], W: Sequence[float]) -> np.ndarray:
    """Unrounded optimal sample counts per level"""
    v, w = _check_allocation_inputs(theta, V, W)
    scale = (c_alpha / (theta * tol)) ** 2
    return scale * np.sqrt(v / w) * np.sum(np.sqrt(v * w))


def optimal_samples(tol: float, theta: float, c_alpha: float,
                    V: Sequence[float], W: Sequence[float], min_samples: int = 1) -> List[int]:
    real = optimal_samples_real(tol, theta, c_alpha, V, W)
    return [max(min_samples, int(math.ceil(m))) for m in real]


def predicted_work(tol: float, theta: float, c_alpha: float,
                   V: Sequence[float], W: Sequence[float]) -> float:
    v, w = _check_allocation_inputs(theta, V, W)
    return (c_alpha / (theta * tol)) ** 2 * float(np.sum(np.sqrt(v * w))) ** 2


def allocate(tol: float, theta: float, c_alpha: float,
             V: Sequence[float], W: Sequence[float], min_samples: int = 1) -> Allocation:
    return Allocation(
        M=optimal_samples(tol, theta, c_alpha, V, W, min_samples=min_samples),
        theta=theta,
        predicted_work=predicted_work(tol, theta, c_alpha, V, W),
    )


def estimator_value(stats: Sequence[LevelStats]) -> float:
    if len(stats) == 0:
        raise InsufficientSamplesError(None, 1, 0)
    return float(sum(sample_mean(s) for s in stats))


def estimator_variance(V: Sequence[float], M: Sequence[int]) -> float:
    v = np.asarray(V, dtype=float)
    m = np.asarray(M, dtype=float)
    if v.shape != m.shape:
        raise ValueError("V and M must have equal length")
    if np.any(m < 1):
        raise ValueError("every level needs at least one sample")
    return float(np.sum(v / m))


def total_error_estimate(bias: float, var_A: float, c_alpha: float) -> float:
    return bias + c_alpha * math.sqrt(var_A)


def c_alpha_from_confidence(confidence: float) -> float:
    """Normal quantile with Phi(C) = 1 - alpha/2 for a confidence level 1 - alpha"""
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    return float(norm.ppf(0.5 + 0.5 * confidence))


def level_stats_to_dict(stats: LevelStats, include_cost: bool = True) -> Dict[str, Any]:
    """Convert level statistics to a dictionary"""
    data = {
        "level": stats.level,
        "count": stats.count,
        "mean": stats.mean,
        "m2": stats.m2,
        "m3": stats.m3,
        "m4": stats.m4,
    }
    if include_cost:
        data["cost"] = stats.cost
    return data


def level_stats_from_dict(data: Dict[str, Any]) -> LevelStats:
    fields = ("level", "count", "mean", "m2", "m3", "m4", "cost")
    return LevelStats(**{k: data[k] for k in fields if k in data})
