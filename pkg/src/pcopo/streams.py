"""Reproducible per-trajectory random streams."""

from __future__ import annotations

import numpy as np


def derive_stream(master_seed: int, trajectory_index: int) -> np.random.Generator:
    """Independent, reproducible stream for one trajectory.

    Uses the seed-sequence spawn mechanism, so the same (seed, index) always
    yields the same stream and distinct indices give statistically
    independent streams.
    """
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(trajectory_index,))
    return np.random.Generator(np.random.PCG64(ss))
