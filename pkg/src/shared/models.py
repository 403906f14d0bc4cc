"""Geometric mesh hierarchy, work model and the parametric weak/strong error models.

Levels are 0-indexed. Rates q1, q2 are real valued, so every power is evaluated
through exp/log rather than integer exponentiation.
"""
import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MeshHierarchy(BaseModel):
    """Geometric mesh family h_l = h0 * beta**(-l) with work W_l = h_l**(-gamma)"""

    model_config = ConfigDict(frozen=True)

    h0: float = Field(gt=0)
    beta: int = Field(gt=1)
    gamma: float = Field(gt=0)

    def mesh_size(self, level: int) -> float:
        return mesh_size(self, level)

    def work(self, level: int) -> float:
        return work_model(self, level)

    def works(self, num_levels: int) -> List[float]:
        """Model work for levels 0..L"""
        return [work_model(self, ell) for ell in range(num_levels + 1)]


class ModelParams(BaseModel):
    """Calibrated (q1, q2, QW, QS) plus per-level variance estimates.

    ``QW`` is the value used for bias and splitting (the worst-case constant once
    calibration has run); ``qw_star`` keeps the least-squares point estimate that
    seeds the variance prior mean.
    """

    model_config = ConfigDict(frozen=True)

    q1: float = Field(gt=0)
    q2: float = Field(gt=0)
    QW: float
    QS: float = Field(gt=0)
    V: List[float] = Field(default_factory=list)
    qw_star: Optional[float] = None

    @model_validator(mode="after")
    def _check_rates(self) -> "ModelParams":
        if self.q2 > 2 * self.q1 * (1 + 1e-12):
            raise ValueError(f"q2={self.q2} exceeds 2*q1={2 * self.q1}")
        if self.QW == 0:
            raise ValueError("QW must be nonzero")
        if any(not v > 0 for v in self.V):
            raise ValueError("variance estimates must be positive")
        return self

    @property
    def weak_constant(self) -> float:
        return self.QW if self.qw_star is None else self.qw_star


def mesh_size(hier: MeshHierarchy, level: int) -> float:
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    return math.exp(math.log(hier.h0) - level * math.log(hier.beta))


def work_model(hier: MeshHierarchy, level: int) -> float:
    return math.exp(-hier.gamma * math.log(mesh_size(hier, level)))


def weak_term(hier: MeshHierarchy, q1: float, level: int) -> float:
    """w_l(q1) = h0**q1 * beta**(-l*q1) * (beta**q1 - 1)"""
    log_beta = math.log(hier.beta)
    return math.exp(q1 * math.log(hier.h0) - level * q1 * log_beta) * math.expm1(q1 * log_beta)


def strong_term(hier: MeshHierarchy, q2: float, level: int) -> float:
    """s_l(q2) = h0**(-q2) * beta**(l*q2)"""
    return math.exp(-q2 * math.log(hier.h0) + level * q2 * math.log(hier.beta))


def bias_model(hier: MeshHierarchy, QW: float, q1: float, num_levels: int) -> float:
    if num_levels < 0:
        raise ValueError(f"L must be nonnegative, got {num_levels}")
    return abs(QW) * math.exp(q1 * math.log(mesh_size(hier, num_levels)))


def model_mean(hier: MeshHierarchy, QW: float, q1: float, level: int) -> float:
    """E[G_l] ~ QW * w_l(q1) for l > 0"""
    return QW * weak_term(hier, q1, level)


def model_variance(hier: MeshHierarchy, QS: float, q2: float, level: int) -> float:
    """V_l ~ QS / s_l(q2) for l > 0"""
    return QS / strong_term(hier, q2, level)
