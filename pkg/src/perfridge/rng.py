"""Counter-based random streams for order-independent reproducibility.

Every random draw in a sweep is keyed by (master seed, trial, step, purpose),
so results do not depend on execution order and trials can run concurrently.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Purpose", "substream"]


class Purpose:
    """Integer tags distinguishing the independent streams of one trial."""

    THETA_STAR = 0
    B_RESAMPLE = 1
    FEATURES = 2
    NOISE = 3


def substream(master_seed: int, *path: int) -> np.random.Generator:
    """Return a Philox generator keyed by ``(master_seed, *path)``.

    Identical keys always yield identical streams; distinct keys yield
    statistically independent streams.
    """
    ss = np.random.SeedSequence(master_seed, spawn_key=tuple(int(x) for x in path))
    return np.random.Generator(np.random.Philox(ss))
