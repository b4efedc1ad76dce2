"""
Seeded random generators.

Every random draw in the library goes through a `numpy.random.Generator` built
from an integer seed plus a path of integer keys, so that independent consumers
(model components, training steps, synthetic scenes) never share a stream.
"""
import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Create a generator for the stream identified by `seed` and `keys`."""
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))
