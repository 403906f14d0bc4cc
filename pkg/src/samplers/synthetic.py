"""Sampler that realizes the weak/strong error models exactly.

Level 0 draws Normal(mean0, var0); level l > 0 draws Normal(QW w_l(q1), QS / s_l(q2)).
An outcome row carries one normal per level, column l drives level l.
"""
import math
from typing import Optional

import numpy as np

from shared.models import MeshHierarchy, model_mean, strong_term

from .base import CoupledSampler


class SyntheticSampler(CoupledSampler):
    name = "synthetic"

    def __init__(self, q1: float = 1.0, q2: float = 1.0, QW: float = 1.0, QS: float = 1.0,
                 gamma: float = 1.0, h0: float = 1.0, beta: int = 2,
                 mean0: float = 1.0, var0: float = 1.0, max_level: Optional[int] = 30):
        if q1 <= 0 or not 0 < q2 <= 2 * q1:
            raise ValueError(f"need q1 > 0 and 0 < q2 <= 2*q1, got q1={q1}, q2={q2}")
        if QS < 0 or var0 < 0:
            raise ValueError("QS and var0 must be nonnegative")
        super().__init__(MeshHierarchy(h0=h0, beta=beta, gamma=gamma), nominal_q1=q1, nominal_q2=q2,
                         max_level=max_level)
        self.q1 = q1
        self.q2 = q2
        self.QW = QW
        self.QS = QS
        self.mean0 = mean0
        self.var0 = var0

    def outcome_width(self, level: int) -> int:
        self.check_level(level)
        return level + 1

    def level_mean(self, level: int) -> float:
        if level == 0:
            return self.mean0
        return model_mean(self.hierarchy, self.QW, self.q1, level)

    def level_sd(self, level: int) -> float:
        if level == 0:
            return math.sqrt(self.var0)
        return math.sqrt(self.QS / strong_term(self.hierarchy, self.q2, level))

    def sample(self, level: int, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(omega)
        self.check_level(level)
        return self.level_mean(level) + self.level_sd(level) * omega[:, level]

    def evaluate(self, level: int, omega: np.ndarray) -> np.ndarray:
        """g_L as the running sum of the level differences up to L"""
        omega = np.atleast_2d(omega)
        total = np.zeros(omega.shape[0])
        for ell in range(level + 1):
            total = total + self.sample(ell, omega)
        return total

    def reference_value(self) -> float:
        """Limit of E[g_L]; the tail of the weak model sums to QW h0**q1"""
        return self.mean0 + self.QW * math.exp(self.q1 * math.log(self.hierarchy.h0))

    def describe(self) -> dict:
        info = super().describe()
        info.update(q1=self.q1, q2=self.q2, QW=self.QW, QS=self.QS, mean0=self.mean0, var0=self.var0)
        return info
