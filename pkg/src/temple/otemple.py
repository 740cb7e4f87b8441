"""Online template learning: RMax per task, with templates pooled across tasks.

Each task runs a fresh RMax learner. When a pair's own visit count reaches
the small threshold its empirical template is matched against the library:
a close template absorbs the pair's counts and lends its pooled counts back
(augmentation), otherwise the pair founds a new template. At the end of a
task every identified pair contributes the visits it gathered afterwards.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .learners import RMaxLearner, TaskMetrics, rmax_update_policy, run_episodes
from .mdp import EpisodicTask
from .templates import (
    RankingPermutation,
    TemplateLibrary,
    TransitionTemplate,
    augment,
    find_closest,
    gen_tt,
    tt_update,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Identification:
    """Outcome of matching one pair: library slot, frozen ranking, estimate."""

    index: int
    sigma: RankingPermutation
    estimate: TransitionTemplate
    created: bool


@dataclass
class TaskState:
    task: EpisodicTask
    learner: RMaxLearner
    identified: np.ndarray
    assignment: dict[tuple[int, int], Identification] = field(default_factory=dict)
    trace: np.ndarray | None = None


IdentifiedHook = Callable[[TaskState, int, int, Identification], None]


class OTempLe:
    """Online template learner; the library persists across ``run_task`` calls.

    ``gap`` is the user-specified template gap: a candidate joins the nearest
    template only when strictly closer than ``gap``. With ``templates=False``
    no identification happens and each task is plain RMax.
    ``identify_known`` lets pairs that became known through augmentation
    still identify (and contribute) when their own count reaches the small
    threshold.
    """

    def __init__(
        self,
        gap: float = 0.15,
        small_threshold: int = 50,
        regular_threshold: int = 500,
        discount: float = 0.95,
        identify_known: bool = True,
        templates: bool = True,
        library: TemplateLibrary | None = None,
    ):
        if small_threshold < 1 or regular_threshold < 1:
            raise ValueError("thresholds must be positive")
        if small_threshold > regular_threshold:
            raise ValueError("the small threshold cannot exceed the known threshold")
        if gap < 0:
            raise ValueError("template gap must be non-negative")
        self.gap = gap
        self.small_threshold = small_threshold
        self.regular_threshold = regular_threshold
        self.discount = discount
        self.identify_known = identify_known
        self.templates = templates
        self.library = library if library is not None else TemplateLibrary()
        self.tasks_seen = 0

    def start_task(self, task: EpisodicTask) -> TaskState:
        learner = RMaxLearner(task.num_states, task.num_actions, self.regular_threshold, self.discount)
        identified = np.zeros((task.num_states, task.num_actions), dtype=np.uint8)
        return TaskState(task, learner, identified)

    def run_task(
        self,
        task: EpisodicTask,
        episodes: int,
        steps: int,
        rng: np.random.Generator,
        on_identified: IdentifiedHook | None = None,
        record: bool = False,
        state: TaskState | None = None,
    ) -> tuple[TaskMetrics, TaskState]:
        state = state if state is not None else self.start_task(task)

        def on_event(s: int, a: int) -> None:
            if not self._needs_identification(state, s, a):
                return
            ident = identify_pair(self, state, s, a)
            if on_identified is not None:
                on_identified(state, s, a, ident)

        run = run_episodes(
            task, state.learner, episodes, steps, rng,
            on_event=on_event,
            small_threshold=self.small_threshold if self.templates else 0,
            identified=state.identified,
            identify_known=self.identify_known,
            ms_metric=self.small_threshold,
            record=record,
        )
        end_of_task_sweep(self, state)
        self.tasks_seen += 1
        run.metrics.num_templates = len(self.library)
        state.trace = run.trace
        return run.metrics, state

    def _needs_identification(self, state: TaskState, s: int, a: int) -> bool:
        ledger = state.learner.ledger
        return (
            self.templates
            and ledger.own_total[s, a] == self.small_threshold
            and not state.identified[s, a]
            and (self.identify_known or not state.learner.known[s, a])
        )


def identify_pair(learner: OTempLe, state: TaskState, s: int, a: int) -> Identification:
    """Match pair ``(s, a)`` against the library at its small threshold."""
    ledger = state.learner.ledger
    counts = ledger.own_counts[s, a].copy()
    reward = float(ledger.own_reward[s, a])
    candidate, record, sigma = gen_tt(counts, reward)
    index = find_closest(learner.library, candidate, learner.gap)
    if index is None:
        index = learner.library.add(candidate, record)
        created = True
    else:
        # read the pool before adding this pair so it is not counted twice
        aug_counts, aug_reward = augment(index, learner.library, counts, reward, sigma)
        tt_update(index, learner.library, counts, reward)
        ledger.set_augmented(s, a, aug_counts, aug_reward)
        created = False
    ledger.contributed_counts[s, a] = counts
    ledger.contributed_reward[s, a] = reward
    state.identified[s, a] = 1
    ident = Identification(index, sigma, candidate, created)
    state.assignment[(s, a)] = ident
    return ident


def end_of_task_sweep(learner: OTempLe, state: TaskState) -> None:
    """Pool every identified pair's not-yet-contributed visits into its template."""
    ledger = state.learner.ledger
    for (s, a), ident in state.assignment.items():
        delta = ledger.own_counts[s, a] - ledger.contributed_counts[s, a]
        delta_reward = float(ledger.own_reward[s, a] - ledger.contributed_reward[s, a])
        if delta.sum() == 0:
            continue
        tt_update(ident.index, learner.library, delta, delta_reward, sigma=ident.sigma)
        ledger.contributed_counts[s, a] = ledger.own_counts[s, a]
        ledger.contributed_reward[s, a] = ledger.own_reward[s, a]


def mark_known_and_replan(state: TaskState) -> int:
    """Add every pair already past the known threshold and re-plan once."""
    learner = state.learner
    eff = learner.ledger.own_total + learner.ledger.aug_total
    newly = np.argwhere((learner.known == 0) & (eff >= learner.threshold))
    if len(newly):
        rmax_update_policy(learner, newly_known=[(int(s), int(a)) for s, a in newly])
    return len(newly)
