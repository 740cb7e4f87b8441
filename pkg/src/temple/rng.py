"""Seeded random streams.

Every stream is a Philox (counter-based) generator keyed by
``(seed, purpose, task_index, ...)``. Environment sampling, in-task
interaction and learner-private exploration draw from separate purposes, so
adding or changing a learner never shifts the task sequence or the
transition randomness another learner sees on the same seed.
"""
from __future__ import annotations

import numpy as np

TASK = 0  # task generation (landforms, goal choice)
INTERACT = 1  # uniforms driving transitions inside a task
EXPLORE = 2  # learner-private randomness (epsilon-greedy)
LAYOUT = 3  # per-run fixed structure, e.g. the two-goal landform layout
DEMO = 4


def stream(seed: int, purpose: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(purpose), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))
