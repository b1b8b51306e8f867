"""Counter-based random streams.

Every (G, U) pair is a pure function of (seed, stream_id, substream, step), so
a realization can be regenerated on any worker without replaying earlier
draws. The generator is Philox4x32-10; one block of four 32-bit words yields
one Gaussian (Box-Muller on words 0-2) and one uniform (word 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import _kernels as K

__all__ = ["RngStream", "philox4x32", "SEED_MASK"]

SEED_MASK = (1 << 64) - 1


def philox4x32(counter, key) -> tuple[int, int, int, int]:
    """Raw Philox4x32-10 block for a 4-word counter and 2-word key."""
    c = [np.uint64(int(x) & 0xFFFFFFFF) for x in counter]
    k = [np.uint64(int(x) & 0xFFFFFFFF) for x in key]
    return tuple(int(w) for w in K.philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


@njit(cache=True)
def _draw_range(seed, substream, stream_id, start, n):
    g = np.empty(n)
    u = np.empty(n)
    for j in range(n):
        g[j], u[j] = K.draw_gu(seed, substream, stream_id, start + j)
    return g, u


@dataclass(frozen=True)
class RngStream:
    """Draws for one realization.

    ``substream`` separates independent uses of the same realization index,
    e.g. the reference and coarse chains of a strong-error coupling.
    """

    seed: int
    stream_id: int = 0
    substream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= v <= SEED_MASK:
                raise ValueError(f"{name} must fit in 64 unsigned bits, got {v}")
        if not 0 <= self.substream < 2**32:
            raise ValueError(f"substream must fit in 32 bits, got {self.substream}")

    def draw(self, step: int) -> tuple[float, float]:
        return K.draw_gu(np.uint64(self.seed), self.substream, np.uint64(self.stream_id), step)

    def draws(self, n: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
        return _draw_range(np.uint64(self.seed), self.substream, np.uint64(self.stream_id), start, n)

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id, self.substream)

    def child(self, substream: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, substream)
