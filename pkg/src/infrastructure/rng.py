"""
Reproducible random streams. Every path owns one stream whose state is derived
from (master seed, stream family, path index) by numpy's SeedSequence hash, so a
path is the same whichever worker generates it and in whatever order.
"""
import numpy as np

SEED_MASK = (1 << 64) - 1


class RngStream:
    def __init__(self, seed: int, index: int = 0, family: int = 0):
        self.seed = int(seed) & SEED_MASK
        self.index = int(index)
        self.family = int(family)
        entropy = np.random.SeedSequence([self.seed, self.family, self.index])
        self.generator = np.random.Generator(np.random.PCG64(entropy))

    def uniform(self, size=None):
        return self.generator.random(size)

    def exponential(self, rate: float, size=None):
        return self.generator.exponential(1.0 / rate, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, family={self.family}, index={self.index})"
