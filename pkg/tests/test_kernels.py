"""The compiled and pure-Python kernels must agree bit for bit."""
from __future__ import annotations

import numpy as np
import pytest

from temple import _pykernels, kernels
from temple.environments import LandformMaze, maze_task
from temple.learners import RMaxLearner, run_episodes
from temple.otemple import OTempLe

from conftest import random_mdp

compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def test_backend_selection_reports_name():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.get_backend("python") is _pykernels


@compiled
def test_bellman_sweeps_agree(rng):
    ck = kernels.get_backend("cython")
    for _ in range(10):
        m = random_mdp(rng, 6, 3)
        Va, Vb = np.zeros(6), np.zeros(6)
        ia, ra = ck.bellman_sweeps(m.transition, m.reward, m.discount, 1e-8, 10_000, Va)
        ib, rb = _pykernels.bellman_sweeps(m.transition, m.reward, m.discount, 1e-8, 10_000, Vb)
        assert ia == ib
        assert np.allclose(Va, Vb, atol=1e-12)


def _run(backend, seed, threshold=40):
    task = maze_task(LandformMaze(3, 3, (0.0, 0.2, 0.4) * 3, goal=8))
    learner = RMaxLearner(9, 4, threshold=threshold)
    events = []
    run = run_episodes(
        task, learner, 60, 25, np.random.default_rng(seed),
        on_event=lambda s, a: events.append((s, a)), small_threshold=10,
        record=True, backend=backend,
    )
    return run, learner, events


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_advance_agrees(seed):
    ra, la, ea = _run(kernels.get_backend("cython"), seed)
    rb, lb, eb = _run(_pykernels, seed)
    assert np.array_equal(ra.trace, rb.trace)
    assert ea == eb
    assert np.array_equal(la.ledger.own_counts, lb.ledger.own_counts)
    assert np.allclose(la.ledger.own_reward, lb.ledger.own_reward)
    assert ra.metrics.cum_reward == rb.metrics.cum_reward
    assert ra.metrics.unknown_visits == rb.metrics.unknown_visits
    assert ra.metrics.steps_to_ms_known == rb.metrics.steps_to_ms_known


def test_trace_matches_counts():
    run, learner, _ = _run(kernels, 3)
    S, A = learner.ledger.shape
    counts = np.zeros((S, A, S), dtype=np.int64)
    for s, a, s2 in run.trace:
        counts[s, a, s2] += 1
    assert np.array_equal(counts, learner.ledger.own_counts)


def test_pure_python_otemple_matches_default(monkeypatch):
    task = maze_task(LandformMaze(3, 3, (0.4,) * 9, goal=8))
    out = []
    for backend in (kernels, _pykernels):
        import temple.learners as L

        monkeypatch.setattr(L, "kernels", backend if backend is not _pykernels else _shim())
        ot = OTempLe(small_threshold=10, regular_threshold=60)
        m, st = ot.run_task(task, 40, 20, np.random.default_rng(9), record=True)
        out.append((m.cum_reward, len(ot.library), st.trace.copy()))
    assert out[0][0] == out[1][0] and out[0][1] == out[1][1]
    assert np.array_equal(out[0][2], out[1][2])


def _shim():
    class K:
        pass

    k = K()
    for name in dir(kernels):
        if name.isupper():
            setattr(k, name, getattr(kernels, name))
    k.advance = _pykernels.advance
    k.bellman_sweeps = _pykernels.bellman_sweeps
    return k
