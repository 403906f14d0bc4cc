"""Euler-Maruyama discretization of a geometric Brownian motion with a call payoff.

The level-l path uses steps(l) = n0 * beta**l uniform time steps. Coarse paths
reuse the fine Brownian increments summed in consecutive groups, so a coarse
increment is exactly the sum of its beta fine sub-increments.
"""
import math

import numpy as np
from scipy.stats import norm

from shared.models import MeshHierarchy

from .base import CoupledSampler


def gbm_reference_value(drift: float = 0.05, volatility: float = 0.2, T: float = 1.0,
                        strike: float = 1.0, scale: float = 10.0, u0: float = 1.0) -> float:
    """Closed-form discounted expectation of scale * max(u(T) - strike, 0)"""
    if volatility == 0:
        return scale * max(u0 - strike * math.exp(-drift * T), 0.0)
    sig_t = volatility * math.sqrt(T)
    d1 = (math.log(u0 / strike) + (drift + 0.5 * volatility ** 2) * T) / sig_t
    d2 = d1 - sig_t
    return scale * (u0 * norm.cdf(d1) - strike * math.exp(-drift * T) * norm.cdf(d2))


class GBMSampler(CoupledSampler):
    name = "gbm"

    def __init__(self, drift: float = 0.05, volatility: float = 0.2, T: float = 1.0,
                 strike: float = 1.0, scale: float = 10.0, u0: float = 1.0,
                 h0: float = 1.0, beta: int = 2, gamma: float = 1.0, max_level: int = 20):
        super().__init__(MeshHierarchy(h0=h0, beta=beta, gamma=gamma), nominal_q1=1.0, nominal_q2=1.0,
                         max_level=max_level)
        n0 = int(round(T / h0))
        if n0 < 1 or abs(n0 * h0 - T) > 1e-12 * T:
            raise ValueError(f"T={T} must be an integer multiple of h0={h0}")
        self.drift = drift
        self.volatility = volatility
        self.T = T
        self.strike = strike
        self.scale = scale
        self.u0 = u0
        self.n0 = n0
        self.discount = math.exp(-drift * T)

    def steps(self, level: int) -> int:
        self.check_level(level)
        return self.n0 * self.hierarchy.beta ** level

    def outcome_width(self, level: int) -> int:
        return self.steps(level)

    def increments(self, level: int, omega: np.ndarray) -> np.ndarray:
        """Brownian increments of the level-l path built from a row of fine normals"""
        n = self.steps(level)
        rows, width = omega.shape
        if width % n:
            raise ValueError(f"outcome width {width} is not a multiple of {n} steps")
        dW = omega * math.sqrt(self.T / width)
        if width == n:
            return dW
        return dW.reshape(rows, n, width // n).sum(axis=2)

    def evaluate(self, level: int, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(omega)
        dW = self.increments(level, omega)
        dt = self.T / dW.shape[1]
        u_final = self.u0 * np.prod(1.0 + self.drift * dt + self.volatility * dW, axis=1)
        return self.scale * self.discount * np.maximum(u_final - self.strike, 0.0)

    def reference_value(self) -> float:
        return gbm_reference_value(self.drift, self.volatility, self.T, self.strike, self.scale, self.u0)

    def describe(self) -> dict:
        info = super().describe()
        info.update(drift=self.drift, volatility=self.volatility, T=self.T,
                    strike=self.strike, scale=self.scale, u0=self.u0)
        return info
