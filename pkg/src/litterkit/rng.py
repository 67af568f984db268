"""Seeded random streams shared by every stochastic operation.

All randomness in the toolkit flows through PCG64 generators keyed by an
integer seed plus optional sub-stream indices, so results reproduce
bit-for-bit across platforms and are independent of execution order.
"""

from __future__ import annotations

import numpy as np


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Return the PCG64 generator for (seed, *stream).

    Sub-stream indices let parallel work items (e.g. transplant tuples)
    draw from disjoint, order-independent streams.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))
