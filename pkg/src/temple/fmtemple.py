"""Finite-model template learning.

Phase 1 runs O-TempLe on the first ``T1`` tasks and keeps each task's own
visit counts. Those tasks are grouped into model clusters. In phase 2 every
identification scores the clusters against the pair's estimate; once a
single cluster survives, the whole task is augmented from its pooled counts.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .learners import TaskMetrics
from .mdp import EpisodicTask
from .otemple import Identification, OTempLe, TaskState, mark_known_and_replan
from .templates import RankingPermutation, TransitionTemplate, gen_tt, pad, tt_distance

log = logging.getLogger(__name__)


@dataclass
class TaskLedger:
    """One phase-1 task's own observations."""

    counts: np.ndarray  # (S, A, S) integers
    reward: np.ndarray  # (S, A) summed normalised reward

    @property
    def shape(self) -> tuple[int, int]:
        return self.reward.shape

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=2)


@dataclass
class ModelCluster:
    """Pooled counts of the tasks believed to share one underlying model."""

    counts: np.ndarray
    reward: np.ndarray
    members: list[int] = field(default_factory=list)
    _signature: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.reward.shape

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    def absorb(self, ledger: TaskLedger, index: int) -> None:
        self.counts = self.counts + ledger.counts
        self.reward = self.reward + ledger.reward
        self.members.append(index)
        self._signature.clear()

    def signature(self, s: int, a: int) -> tuple[TransitionTemplate, RankingPermutation]:
        """Template and ranking of the pooled counts at ``(s, a)``."""
        key = (s, a)
        if key not in self._signature:
            g, _, sigma = gen_tt(self.counts[s, a], float(self.reward[s, a]))
            self._signature[key] = (g, sigma)
        return self._signature[key]


def tie_blocks(probs: np.ndarray, tie_tolerance: float) -> list[range]:
    """Runs of adjacent ranks whose probabilities differ by less than the tolerance."""
    blocks, start = [], 0
    for i in range(1, len(probs)):
        if probs[i - 1] - probs[i] >= tie_tolerance:
            blocks.append(range(start, i))
            start = i
    blocks.append(range(start, len(probs)))
    return blocks


def same_ranking(
    sigma_a: RankingPermutation,
    sigma_b: RankingPermutation,
    probs: np.ndarray,
    tie_tolerance: float = 0.0,
) -> bool:
    """Whether two rankings agree up to reordering inside near-tied blocks.

    With ``tie_tolerance == 0`` this is plain permutation equality. Ranks
    whose ``probs`` (sorted non-increasing) are within the tolerance of their
    neighbour form one block; rankings agree if every block maps to the same
    set of next states.
    """
    if len(sigma_a) != len(sigma_b):
        return False
    if tie_tolerance <= 0:
        return sigma_a == sigma_b
    ra, rb = sigma_a.rank_to_index, sigma_b.rank_to_index
    for block in tie_blocks(pad(probs, len(ra)), tie_tolerance):
        if set(ra[block.start:block.stop].tolist()) != set(rb[block.start:block.stop].tolist()):
            return False
    return True


def signature_mismatch(
    template: TransitionTemplate,
    sigma: RankingPermutation,
    cluster_template: TransitionTemplate,
    cluster_sigma: RankingPermutation,
    tolerance: float,
    tie_tolerance: float = 0.0,
) -> bool:
    """True when the estimate is at least ``tolerance`` away or ranks differently."""
    if tt_distance(template, cluster_template) >= tolerance:
        return True
    n = max(template.support, cluster_template.support)
    ref = (pad(template.probs, n) + pad(cluster_template.probs, n)) / 2.0
    return not same_ranking(sigma, cluster_sigma, ref, tie_tolerance)


def _matches(
    cluster: ModelCluster,
    ledger: TaskLedger,
    model_gap: float,
    small_threshold: int,
    tie_tolerance: float,
) -> bool:
    if cluster.shape != ledger.shape:
        return False
    both = (cluster.totals >= small_threshold) & (ledger.totals >= small_threshold)
    for s, a in zip(*np.nonzero(both)):
        g, sigma = cluster.signature(int(s), int(a))
        h, _, tau = gen_tt(ledger.counts[s, a], float(ledger.reward[s, a]))
        if signature_mismatch(h, tau, g, sigma, model_gap, tie_tolerance):
            return False
    return True


def cluster_models(
    ledgers: list[TaskLedger],
    model_gap: float = 0.6,
    small_threshold: int = 50,
    tie_tolerance: float = 0.2,
) -> list[ModelCluster]:
    """Greedy sequential clustering of task ledgers.

    A task joins the first cluster it matches at every pair visited at least
    ``small_threshold`` times in both; otherwise it founds a new cluster.
    """
    if not ledgers:
        raise ValueError("no task ledgers to cluster")
    if model_gap <= 0:
        raise ValueError("model gap must be positive")
    clusters: list[ModelCluster] = []
    for i, ledger in enumerate(ledgers):
        for cluster in clusters:
            if _matches(cluster, ledger, model_gap, small_threshold, tie_tolerance):
                cluster.absorb(ledger, i)
                break
        else:
            clusters.append(ModelCluster(ledger.counts.copy(), ledger.reward.copy(), [i]))
    return clusters


@dataclass
class ModelScores:
    """Per-cluster plausibility for the current task; never increases."""

    u: np.ndarray
    eta: int

    @classmethod
    def fresh(cls, n: int, eta: int) -> "ModelScores":
        return cls(np.full(n, eta, dtype=np.int64), eta)

    def live(self) -> list[int]:
        return [int(c) for c in np.nonzero(self.u > 0)[0]]

    def strike(self, c: int) -> None:
        self.u[c] -= 1


@dataclass
class Phase2State:
    scores: ModelScores
    chosen: int | None = None
    augmented_at: int = -1  # identification event index of bulk augmentation
    events: int = 0
    fallback: bool = False


class FMTempLe:
    """Two-phase learner wrapping an :class:`OTempLe` instance.

    ``tolerance`` governs template equality when scoring clusters;
    ``model_gap`` governs clustering. ``identify_models=False`` skips
    scoring, so phase 2 behaves exactly like O-TempLe.
    """

    def __init__(
        self,
        gap: float = 0.24,
        model_gap: float = 0.6,
        phase1_tasks: int = 15,
        eta: int = 1,
        small_threshold: int = 50,
        regular_threshold: int = 500,
        discount: float = 0.95,
        tie_tolerance: float = 0.2,
        identify_known: bool = True,
        identify_models: bool = True,
    ):
        if phase1_tasks < 1:
            raise ValueError("phase 1 needs at least one task")
        if eta < 1:
            raise ValueError("model error tolerance must be at least 1")
        self.base = OTempLe(gap, small_threshold, regular_threshold, discount, identify_known)
        self.gap = gap
        self.model_gap = model_gap
        self.phase1_tasks = phase1_tasks
        self.eta = eta
        self.tie_tolerance = tie_tolerance
        self.identify_models = identify_models
        self.ledgers: list[TaskLedger] = []
        self.clusters: list[ModelCluster] | None = None
        self.last_phase2: Phase2State | None = None

    @property
    def library(self):
        return self.base.library

    @property
    def tasks_seen(self) -> int:
        return self.base.tasks_seen

    def run_task(
        self,
        task: EpisodicTask,
        episodes: int,
        steps: int,
        rng: np.random.Generator,
        record: bool = False,
    ) -> tuple[TaskMetrics, TaskState]:
        if self.tasks_seen < self.phase1_tasks:
            return self.phase1_task(task, episodes, steps, rng, record)
        if self.clusters is None:
            self.clusters = cluster_models(
                self.ledgers, self.model_gap, self.base.small_threshold, self.tie_tolerance
            )
            log.info("phase 1 done: %d tasks in %d clusters", len(self.ledgers), len(self.clusters))
        return self.phase2_task(task, episodes, steps, rng, record)

    def phase1_task(self, task, episodes, steps, rng, record=False):
        metrics, state = self.base.run_task(task, episodes, steps, rng, record=record)
        ledger = state.learner.ledger
        self.ledgers.append(TaskLedger(ledger.own_counts.copy(), ledger.own_reward.copy()))
        return metrics, state

    def phase2_task(self, task, episodes, steps, rng, record=False):
        clusters = self.clusters or []
        p2 = Phase2State(ModelScores.fresh(len(clusters), self.eta))
        self.last_phase2 = p2
        hook = None
        if self.identify_models and clusters:
            def hook(state: TaskState, s: int, a: int, ident: Identification) -> None:
                self._score(state, p2, s, a, ident)
        return self.base.run_task(task, episodes, steps, rng, on_identified=hook, record=record)

    def _score(self, state: TaskState, p2: Phase2State, s: int, a: int, ident: Identification) -> None:
        p2.events += 1
        if p2.chosen is not None or p2.fallback:
            return
        shape = state.identified.shape
        for c in p2.scores.live():
            cluster = self.clusters[c]
            if cluster.shape != shape:
                p2.scores.strike(c)
                continue
            if cluster.totals[s, a] < self.base.small_threshold:
                continue
            g, sigma = cluster.signature(s, a)
            if signature_mismatch(ident.estimate, ident.sigma, g, sigma, self.gap, self.tie_tolerance):
                p2.scores.strike(c)
        live = p2.scores.live()
        if len(live) == 1:
            p2.chosen = live[0]
            p2.augmented_at = p2.events
            bulk_augment(state, self.clusters[live[0]])
        elif not live:
            p2.fallback = True
            log.info("every model cluster eliminated; continuing as O-TempLe")


def bulk_augment(state: TaskState, cluster: ModelCluster) -> int:
    """Lend every pair the cluster's pooled counts, then re-plan once."""
    ledger = state.learner.ledger
    S, A = ledger.shape
    for s in range(S):
        for a in range(A):
            if cluster.totals[s, a] > 0:
                ledger.set_augmented(s, a, cluster.counts[s, a], float(cluster.reward[s, a]))
    return mark_known_and_replan(state)


# -- serialisation -----------------------------------------------------------


def dumps_clusters(clusters: list[ModelCluster]) -> str:
    return json.dumps(
        {
            "version": 1,
            "clusters": [
                {
                    "members": c.members,
                    "shape": list(c.counts.shape),
                    "counts": c.counts.astype(int).ravel().tolist(),
                    "reward": [repr(float(x)) for x in c.reward.ravel()],
                }
                for c in clusters
            ],
        },
        indent=1,
    )


def loads_clusters(text: str) -> list[ModelCluster]:
    doc = json.loads(text)
    if doc.get("version") != 1:
        raise ValueError("unsupported cluster file version")
    out = []
    for c in doc["clusters"]:
        S, A, _ = c["shape"]
        counts = np.asarray(c["counts"], dtype=np.int64).reshape(S, A, S)
        reward = np.asarray([float(x) for x in c["reward"]]).reshape(S, A)
        out.append(ModelCluster(counts, reward, list(c["members"])))
    return out


def save_clusters(clusters: list[ModelCluster], path) -> None:
    Path(path).write_text(dumps_clusters(clusters))


def load_clusters(path) -> list[ModelCluster]:
    return loads_clusters(Path(path).read_text())
