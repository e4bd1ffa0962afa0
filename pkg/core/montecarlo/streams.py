"""
Seeded counter-based random streams.

Every trial draws from its own Philox stream keyed by ``seed ^ trial``, so a
trial's noise does not depend on which worker or chunk simulates it.
"""

from typing import Union

import numpy as np

SEED_MASK = (1 << 64) - 1


class RngStream:
    """A 64-bit seeded Philox stream of standard-normal draws."""

    def __init__(self, seed: int):
        seed = int(seed)
        if seed < 0 or seed > SEED_MASK:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.generator = np.random.Generator(np.random.Philox(key=seed))

    def for_trial(self, trial: int) -> 'RngStream':
        """Independent stream of one trial, keyed by seed xor trial index."""
        return RngStream(self.seed ^ int(trial))

    def normal(self, shape) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed})"


def standard_normal(rng: Union[RngStream, np.random.Generator], dim: int) -> np.ndarray:
    """
    ``dim`` independent N(0, 1) draws.

    Raises:
        ValueError: dim < 1
    """
    if dim < 1:
        raise ValueError(f"Draw dimension must be at least 1, got {dim}")
    if isinstance(rng, RngStream):
        return rng.normal(dim)
    return rng.standard_normal(dim)
