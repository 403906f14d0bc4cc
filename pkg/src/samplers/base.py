from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from shared.models import MeshHierarchy

from .rng import SampleStream


class CoupledSampler(ABC):
    """Generator of coupled level differences G_l = g_l - g_{l-1} on a mesh hierarchy.

    A random outcome omega is a row of standard normals. Both evaluations of a
    level difference read the same row, which is what couples them. Rows wider
    than ``outcome_width(level)`` are accepted so that one outcome drawn for the
    finest level can drive every coarser level.
    """

    name = "sampler"

    def __init__(self, hierarchy: MeshHierarchy, nominal_q1: float, nominal_q2: float,
                 max_level: Optional[int] = None):
        self.hierarchy = hierarchy
        self.nominal_q1 = nominal_q1
        self.nominal_q2 = nominal_q2
        self.max_level = max_level

    @abstractmethod
    def outcome_width(self, level: int) -> int:
        """Number of standard normals per outcome on this level"""

    @abstractmethod
    def evaluate(self, level: int, omega: np.ndarray) -> np.ndarray:
        """Quantity of interest g_level for each outcome row"""

    def sample(self, level: int, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(omega)
        fine = self.evaluate(level, omega)
        if level == 0:
            return fine
        return fine - self.evaluate(level - 1, omega)

    def draw(self, stream: SampleStream, start: int, count: int) -> np.ndarray:
        """Coupled differences for samples start..start+count-1 of a stream"""
        omega = stream.normals(start, count, self.outcome_width(stream.level))
        return self.sample(stream.level, omega)

    def model_cost(self, level: int) -> float:
        return self.hierarchy.work(level)

    def check_level(self, level: int) -> None:
        if level < 0:
            raise ValueError(f"level must be nonnegative, got {level}")
        if self.max_level is not None and level > self.max_level:
            raise ValueError(f"{self.name} supports levels up to {self.max_level}, got {level}")

    def describe(self) -> dict:
        return {
            "name": self.name,
            "h0": self.hierarchy.h0,
            "beta": self.hierarchy.beta,
            "gamma": self.hierarchy.gamma,
            "nominal_q1": self.nominal_q1,
            "nominal_q2": self.nominal_q2,
        }
