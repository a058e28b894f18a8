"""Seedable counter-based random streams.

Every stochastic component derives its generator from a (seed, stream)
pair through :func:`generator_for`.  The generator is numpy's Philox
counter-based bit generator keyed with ``[seed, stream]``, so streams
are independent, reproducible across platforms, and can be handed to
workers in any order without changing the output.

Stream assignment convention (documented in docs/format-spec.md):

* generation: stream = segment id
* mert restarts: stream = restart index
"""

import numpy as np


def generator_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Return the generator for the given (seed, stream) pair."""
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be nonnegative")
    return np.random.Generator(np.random.Philox(key=[seed, stream]))
