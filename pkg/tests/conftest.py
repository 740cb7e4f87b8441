from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_mdp(rng, S, A, discount=0.9, sparse=False):
    """Dense random MDP with rewards in [0, 1]."""
    from temple.mdp import TabularMdp

    P = rng.random((S, A, S)) ** (4 if sparse else 1)
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((S, A))
    mu = np.full(S, 1.0 / S)
    return TabularMdp(P, R, mu, discount)
