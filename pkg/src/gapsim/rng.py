"""Counter-based random streams keyed by (master seed, task index).

Every Monte Carlo task draws from its own Philox stream, so results do not
depend on how tasks are scheduled across workers.
"""

from __future__ import annotations

import os

import numpy as np

SEED_ENV = "GAPSIM_SEED"


def stream(seed: int, task: int, *path: int) -> np.random.Generator:
    """Independent generator for ``task`` (optionally a sub-path) under ``seed``."""
    if seed < 0 or task < 0:
        raise ValueError("seed and task index must be nonnegative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(task), *map(int, path)))
    return np.random.Generator(np.random.Philox(ss))


def default_seed(fallback: int = 0) -> int:
    val = os.environ.get(SEED_ENV)
    return int(val) if val not in (None, "") else fallback
