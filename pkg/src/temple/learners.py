"""Single-task base learners: RMax over an induced optimistic MDP, and Q-learning."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .mdp import EpisodicTask, Policy, TabularMdp, value_iteration

R_MAX = 1.0


@dataclass
class VisitLedger:
    """Per-pair visit bookkeeping for one task.

    Own counts are the pair's real observations in this task; augmented counts
    come from a template's pool and are kept apart so they are never pushed
    back into the library. ``contributed_*`` track what has already been
    pooled so each own observation is contributed once.
    """

    own_counts: np.ndarray
    own_reward: np.ndarray
    aug_counts: np.ndarray
    aug_reward: np.ndarray
    contributed_counts: np.ndarray
    contributed_reward: np.ndarray
    own_total: np.ndarray = field(init=False)
    aug_total: np.ndarray = field(init=False)

    def __post_init__(self):
        self.own_total = self.own_counts.sum(axis=2)
        self.aug_total = self.aug_counts.sum(axis=2)

    @classmethod
    def zeros(cls, num_states: int, num_actions: int) -> "VisitLedger":
        S, A = num_states, num_actions
        return cls(
            own_counts=np.zeros((S, A, S), dtype=np.int64),
            own_reward=np.zeros((S, A)),
            aug_counts=np.zeros((S, A, S), dtype=np.int64),
            aug_reward=np.zeros((S, A)),
            contributed_counts=np.zeros((S, A, S), dtype=np.int64),
            contributed_reward=np.zeros((S, A)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.own_total.shape

    @property
    def contributed(self) -> np.ndarray:
        return self.contributed_counts.sum(axis=2)

    def effective_counts(self, s: int, a: int) -> np.ndarray:
        return self.own_counts[s, a] + self.aug_counts[s, a]

    def effective_total(self) -> np.ndarray:
        return self.own_total + self.aug_total

    def set_augmented(self, s: int, a: int, counts, reward: float) -> bool:
        """Replace the pair's augmented counts if ``counts`` carries more evidence."""
        counts = np.asarray(counts, dtype=np.int64)
        total = int(counts.sum())
        if total <= self.aug_total[s, a]:
            return False
        self.aug_counts[s, a] = counts
        self.aug_reward[s, a] = reward
        self.aug_total[s, a] = total
        return True

    def check(self) -> None:
        for name in ("own_counts", "aug_counts", "contributed_counts"):
            if np.any(getattr(self, name) < 0):
                raise AssertionError(f"{name} has negative entries")
        if not np.array_equal(self.own_total, self.own_counts.sum(axis=2)):
            raise AssertionError("own_total out of sync with own_counts")
        if np.any(self.contributed > self.own_total):
            raise AssertionError("contributed more visits than observed")


def induced_mdp(
    ledger: VisitLedger,
    known: np.ndarray,
    num_states: int,
    num_actions: int,
    discount: float,
) -> TabularMdp:
    """RMax's optimistic model.

    Known pairs use the empirical estimate from own plus augmented counts;
    every other pair self-loops with reward ``R_MAX``.
    """
    S, A = num_states, num_actions
    P = np.zeros((S, A, S))
    R = np.full((S, A), R_MAX)
    idx = np.arange(S)
    P[idx, :, idx] = 1.0
    known = np.asarray(known, dtype=bool)
    if known.any():
        counts = (ledger.own_counts + ledger.aug_counts)[known].astype(float)
        totals = counts.sum(axis=1)
        if np.any(totals <= 0):
            raise ValueError("a known pair has no visits")
        P[known] = counts / totals[:, None]
        R[known] = np.clip((ledger.own_reward + ledger.aug_reward)[known] / totals, 0.0, 1.0)
    return TabularMdp(P, R, np.full(S, 1.0 / S), discount)


class RMaxLearner:
    """Model-based learner that plans optimistically in the induced MDP."""

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        threshold: int = 500,
        discount: float = 0.95,
        tolerance: float = 1e-6,
    ):
        if threshold < 1:
            raise ValueError("known threshold must be positive")
        self.num_states = num_states
        self.num_actions = num_actions
        self.threshold = int(threshold)
        self.discount = discount
        self.tolerance = tolerance
        self.ledger = VisitLedger.zeros(num_states, num_actions)
        self.known = np.zeros((num_states, num_actions), dtype=np.uint8)
        self.policy_updates = 0
        rmax_update_policy(self, discount)

    @property
    def known_set(self) -> set[tuple[int, int]]:
        return {(int(s), int(a)) for s, a in zip(*np.nonzero(self.known))}

    def should_know(self, s: int, a: int) -> bool:
        return not self.known[s, a] and self.ledger.own_total[s, a] + self.ledger.aug_total[s, a] >= self.threshold

    def induced(self) -> TabularMdp:
        return induced_mdp(self.ledger, self.known, self.num_states, self.num_actions, self.discount)


def rmax_update_policy(
    learner: RMaxLearner,
    discount: float | None = None,
    newly_known: tuple[int, int] | list[tuple[int, int]] | None = None,
) -> Policy:
    """Mark ``newly_known`` pairs as known and re-plan in the induced MDP."""
    if newly_known is not None:
        pairs = [newly_known] if isinstance(newly_known, tuple) else newly_known
        for s, a in pairs:
            learner.known[s, a] = 1
    if discount is not None:
        learner.discount = discount
    values, policy = value_iteration(learner.induced(), learner.tolerance)
    learner.values = values
    learner.policy = policy
    learner.policy_updates += 1
    return policy


@dataclass
class TaskMetrics:
    cum_reward: float = 0.0
    disc_return: float = 0.0
    unknown_visits: int = 0
    num_templates: int = 0
    steps_to_ms_known: int = -1
    wall_ms: float = 0.0
    steps: int = 0
    known_pairs: int = 0


@dataclass
class EpisodeRun:
    """Result of driving a learner through one task's episodes."""

    metrics: TaskMetrics
    trace: np.ndarray


EventHook = Callable[[int, int], None]


def run_episodes(
    task: EpisodicTask,
    learner: RMaxLearner,
    episodes: int,
    steps: int,
    rng: np.random.Generator,
    on_event: EventHook | None = None,
    small_threshold: int = 0,
    identified: np.ndarray | None = None,
    identify_known: bool = True,
    ms_metric: int = 50,
    record: bool = False,
    backend=None,
) -> EpisodeRun:
    """Drive ``learner`` through ``episodes`` episodes of at most ``steps`` steps.

    The compiled loop returns whenever a visited pair reaches the small
    threshold (for ``on_event``) or the known threshold; policy updates
    happen here. The uniform stream is laid out per episode so every learner
    facing the same ``rng`` sees the same environment randomness.
    """
    kern = backend if backend is not None else kernels
    mdp = task.mdp
    S, A = mdp.num_states, mdp.num_actions
    cdf = np.ascontiguousarray(np.cumsum(mdp.transition, axis=2))
    start_cdf = np.ascontiguousarray(np.cumsum(mdp.start_dist))
    terminal = np.ascontiguousarray(mdp.terminal.astype(np.uint8))
    uniforms = rng.random(episodes * (steps + 1))
    if identified is None:
        identified = np.zeros((S, A), dtype=np.uint8)
    ledger = learner.ledger
    cursor = np.zeros(9, dtype=np.int64)
    cursor[kernels.STEPS_TO_MS] = -1
    totals = np.zeros(3)
    totals[kernels.DISC_FACTOR] = 1.0
    trace = np.zeros((episodes * steps if record else 0, 3), dtype=np.int64)

    started = time.perf_counter()
    while True:
        status = kern.advance(
            cdf, start_cdf, mdp.reward, task.raw_reward, terminal,
            learner.policy.action_of, uniforms,
            ledger.own_counts, ledger.own_total, ledger.own_reward, ledger.aug_total,
            learner.known, identified,
            small_threshold, learner.threshold, identify_known, ms_metric,
            steps, episodes, mdp.discount, cursor, totals, trace,
        )
        if status == kernels.DONE:
            break
        s, a = int(cursor[kernels.EVENT_S]), int(cursor[kernels.EVENT_A])
        if on_event is not None:
            on_event(s, a)
        if learner.should_know(s, a):
            rmax_update_policy(learner, newly_known=(s, a))

    metrics = TaskMetrics(
        cum_reward=float(totals[kernels.CUM_REWARD]),
        disc_return=float(totals[kernels.DISC_RETURN]),
        unknown_visits=int(cursor[kernels.UNKNOWN_VISITS]),
        steps_to_ms_known=int(cursor[kernels.STEPS_TO_MS]),
        wall_ms=(time.perf_counter() - started) * 1e3,
        steps=int(cursor[kernels.GLOBAL_STEP]),
        known_pairs=int(learner.known.sum()),
    )
    return EpisodeRun(metrics, trace[: metrics.steps])


def run_rmax_task(
    task: EpisodicTask,
    episodes: int,
    steps: int,
    rng: np.random.Generator,
    threshold: int = 500,
    ms_metric: int = 50,
    record: bool = False,
) -> tuple[RMaxLearner, EpisodeRun]:
    """Plain single-task RMax on a fresh learner."""
    learner = RMaxLearner(task.num_states, task.num_actions, threshold, task.mdp.discount)
    run = run_episodes(task, learner, episodes, steps, rng, ms_metric=ms_metric, record=record)
    return learner, run


# -- Q-learning baseline -----------------------------------------------------


class QLearner:
    """Tabular Q-learning with epsilon-greedy exploration and optimistic init."""

    def __init__(
        self,
        num_states: int,
        num_actions: int,
        learning_rate: float = 0.1,
        exploration: float = 0.1,
        discount: float = 0.95,
        initial: float | None = None,
    ):
        self.learning_rate = learning_rate
        self.exploration = exploration
        self.discount = discount
        self.v_max = 1.0 / (1.0 - discount)
        init = self.v_max if initial is None else initial
        self.q = np.full((num_states, num_actions), float(init))


def q_select(learner: QLearner, s: int, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties go to the lowest action index."""
    if rng.random() < learner.exploration:
        return int(rng.integers(learner.q.shape[1]))
    return int(np.argmax(learner.q[s]))


def q_step(learner: QLearner, s: int, a: int, r: float, s_next: int) -> None:
    target = r + learner.discount * learner.q[s_next].max()
    q = learner.q[s, a] + learner.learning_rate * (target - learner.q[s, a])
    learner.q[s, a] = min(max(q, 0.0), learner.v_max)


def run_q_task(
    task: EpisodicTask,
    episodes: int,
    steps: int,
    rng: np.random.Generator,
    explore_rng: np.random.Generator,
    learning_rate: float = 0.1,
    exploration: float = 0.1,
) -> tuple[QLearner, TaskMetrics]:
    """Q-learning on one task, using the same environment-uniform layout as RMax."""
    mdp = task.mdp
    learner = QLearner(task.num_states, task.num_actions, learning_rate, exploration, mdp.discount)
    cdf = np.cumsum(mdp.transition, axis=2)
    start_cdf = np.cumsum(mdp.start_dist)
    uniforms = rng.random(episodes * (steps + 1))
    m = TaskMetrics()
    started = time.perf_counter()
    for ep in range(episodes):
        base = ep * (steps + 1)
        s = min(int(np.searchsorted(start_cdf, uniforms[base], side="right")), mdp.num_states - 1)
        disc = 1.0
        for t in range(steps):
            a = q_select(learner, s, explore_rng)
            s2 = min(int(np.searchsorted(cdf[s, a], uniforms[base + 1 + t], side="right")), mdp.num_states - 1)
            q_step(learner, s, a, mdp.reward[s, a], s2)
            raw = task.raw_reward[s, a]
            m.cum_reward += raw
            m.disc_return += disc * raw
            disc *= mdp.discount
            m.steps += 1
            if mdp.terminal[s]:
                break
            s = s2
    m.wall_ms = (time.perf_counter() - started) * 1e3
    return learner, m
