"""Counter-based random streams.

Sample m on level l of a run with seed s always reads the same uniforms: the
Philox key is (s, l) and sample m lives in block m // BLOCK_SIZE, whose counter
is fixed. Results therefore do not depend on batch sizes or thread scheduling.
"""
import numpy as np
from scipy.special import ndtri

BLOCK_SIZE = 256
UINT64_MASK = (1 << 64) - 1
# the top 52 bits k of a raw draw map to (k + 0.5) * 2**-52, strictly inside (0, 1)
MANTISSA_SHIFT = np.uint64(12)
UNIT_SCALE = 2.0 ** -52


def unit_interval(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit draws to doubles in (0, 1) without ever hitting either end"""
    k = np.asarray(raw, dtype=np.uint64) >> MANTISSA_SHIFT
    return (k.astype(np.float64) + 0.5) * UNIT_SCALE


class SampleStream:
    """Random outcomes of one (seed, level) pair addressed by global sample index"""

    def __init__(self, seed: int, level: int):
        if level < 0:
            raise ValueError(f"level must be nonnegative, got {level}")
        self.seed = seed
        self.level = level
        self._key = np.array([seed & UINT64_MASK, level], dtype=np.uint64)

    def _block(self, block_index: int, width: int) -> np.ndarray:
        bit_generator = np.random.Philox(key=self._key, counter=np.array([0, block_index, 0, 0], dtype=np.uint64))
        return unit_interval(bit_generator.random_raw(BLOCK_SIZE * width)).reshape(BLOCK_SIZE, width)

    def uniforms(self, start: int, count: int, width: int) -> np.ndarray:
        """Uniforms in (0, 1) for samples start..start+count-1, shape (count, width)"""
        if start < 0 or count < 0 or width < 1:
            raise ValueError("start and count must be nonnegative and width positive")
        out = np.empty((count, width))
        filled = 0
        while filled < count:
            index = start + filled
            block_index, offset = divmod(index, BLOCK_SIZE)
            take = min(BLOCK_SIZE - offset, count - filled)
            out[filled:filled + take] = self._block(block_index, width)[offset:offset + take]
            filled += take
        return out

    def normals(self, start: int, count: int, width: int) -> np.ndarray:
        return ndtri(self.uniforms(start, count, width))
