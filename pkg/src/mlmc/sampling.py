import time
from typing import Dict

import numpy as np
import structlog

from samplers.base import CoupledSampler
from samplers.rng import SampleStream
from shared.metrics import record_samples

from .estimator import LevelStats, add_batch

logger = structlog.get_logger(__name__)

# upper bound on normals held in memory per chunk
MAX_CHUNK_VALUES = 1 << 21


class HierarchySampler:
    """Sampling session of one run: streams per level plus the two work ledgers.

    Every call hands out fresh sample indices, so batches never overlap and the
    values depend only on the seed and the order of requests per level.
    """

    def __init__(self, sampler: CoupledSampler, seed: int):
        self.sampler = sampler
        self.seed = seed
        self.model_work = 0.0
        self.measured_cost = 0.0
        self._streams: Dict[int, SampleStream] = {}
        self._next_index: Dict[int, int] = {}

    def stream(self, level: int) -> SampleStream:
        if level not in self._streams:
            self._streams[level] = SampleStream(self.seed, level)
            self._next_index[level] = 0
        return self._streams[level]

    def generated(self, level: int) -> int:
        return self._next_index.get(level, 0)

    def generate(self, level: int, count: int) -> LevelStats:
        """Draw count new coupled differences on a level"""
        stats = LevelStats(level=level)
        if count <= 0:
            return stats

        stream = self.stream(level)
        chunk = max(1, MAX_CHUNK_VALUES // self.sampler.outcome_width(level))
        remaining = count
        while remaining > 0:
            take = min(chunk, remaining)
            start = self._next_index[level]
            tic = time.perf_counter()
            values = np.asarray(self.sampler.draw(stream, start, take))
            elapsed = time.perf_counter() - tic
            stats = add_batch(stats, values, elapsed)
            self._next_index[level] = start + take
            self.measured_cost += elapsed
            remaining -= take

        self.model_work += count * self.sampler.model_cost(level)
        record_samples(self.sampler.name, level, count)
        logger.debug("samples_generated", sampler=self.sampler.name, level=level, count=count)
        return stats
