"""Transition templates: rank-ordered transition patterns pooled across pairs.

A template is a transition row sorted into non-increasing order plus a reward.
State-action pairs whose sorted rows are close share one template and pool
their visit counts into it; the pooled counts are permuted back into each
pair's own state ordering when augmenting its estimate.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

SUM_TOL = 1e-9


def pad(v: np.ndarray, n: int) -> np.ndarray:
    """Zero-extend ``v`` to length ``n`` (never truncates)."""
    v = np.asarray(v)
    if len(v) >= n:
        return v
    return np.concatenate([v, np.zeros(n - len(v), dtype=v.dtype)])


def trim(v: np.ndarray) -> np.ndarray:
    """Drop trailing zeros, keeping at least one entry."""
    nz = np.flatnonzero(v)
    return v[: max(1, nz[-1] + 1 if len(nz) else 1)]


@dataclass(frozen=True, eq=False)
class TransitionTemplate:
    probs: np.ndarray
    reward: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("template probabilities must be a non-empty vector")
        if np.any(p < 0) or np.any(np.diff(p) > SUM_TOL):
            raise ValueError(f"template probabilities must be non-negative and non-increasing: {p}")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"template probabilities must sum to 1, got {p.sum()!r}")
        if not -SUM_TOL <= self.reward <= 1.0 + SUM_TOL:
            raise ValueError(f"template reward must lie in [0, 1], got {self.reward}")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "reward", float(self.reward))

    def __eq__(self, other):
        if not isinstance(other, TransitionTemplate):
            return NotImplemented
        n = max(len(self.probs), len(other.probs))
        return self.reward == other.reward and np.array_equal(pad(self.probs, n), pad(other.probs, n))

    def __hash__(self):
        return hash((trim(self.probs).tobytes(), self.reward))

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.probs))

    def __repr__(self):
        body = ", ".join(f"{x:.4g}" for x in trim(self.probs))
        return f"TransitionTemplate([{body}], {self.reward:.4g})"


@dataclass(frozen=True, eq=False)
class RankingPermutation:
    """Stable descending ranking of a vector.

    ``rank_to_index[i]`` is the original index of the i-th largest entry and
    ``index_to_rank`` is its inverse. Equal entries keep their index order.
    """

    rank_to_index: np.ndarray
    index_to_rank: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        fwd = np.asarray(self.rank_to_index, dtype=np.int64)
        if sorted(fwd.tolist()) != list(range(len(fwd))):
            raise ValueError("rank_to_index is not a permutation")
        inv = np.empty_like(fwd)
        inv[fwd] = np.arange(len(fwd))
        if self.index_to_rank is not None and not np.array_equal(self.index_to_rank, inv):
            raise ValueError("index_to_rank is not the inverse of rank_to_index")
        fwd.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "rank_to_index", fwd)
        object.__setattr__(self, "index_to_rank", inv)

    @classmethod
    def of(cls, values) -> "RankingPermutation":
        values = np.asarray(values)
        return cls(np.argsort(-values, kind="stable"))

    @classmethod
    def identity(cls, n: int) -> "RankingPermutation":
        return cls(np.arange(n))

    def __len__(self):
        return len(self.rank_to_index)

    def __eq__(self, other):
        return isinstance(other, RankingPermutation) and np.array_equal(
            self.rank_to_index, other.rank_to_index
        )

    def __hash__(self):
        return hash(self.rank_to_index.tobytes())

    def apply(self, v) -> np.ndarray:
        """sigma(v): reorder a state-indexed vector into rank order."""
        return np.asarray(v)[self.rank_to_index]

    def invert(self, w) -> np.ndarray:
        """sigma^-1(w): map a rank-ordered vector back to state order."""
        return np.asarray(w)[self.index_to_rank]


@dataclass
class TtVisitRecord:
    """Pooled rank-ordered visit counts and reward sum behind one template."""

    ordered_counts: np.ndarray
    reward_sum: float = 0.0

    def __post_init__(self):
        self.ordered_counts = np.asarray(self.ordered_counts, dtype=np.int64)
        self.reward_sum = float(self.reward_sum)

    @property
    def total(self) -> int:
        return int(self.ordered_counts.sum())

    def template(self) -> TransitionTemplate:
        n = self.total
        return TransitionTemplate(self.ordered_counts / n, self.reward_sum / n)

    def copy(self) -> "TtVisitRecord":
        return TtVisitRecord(self.ordered_counts.copy(), self.reward_sum)


@dataclass
class TemplateLibrary:
    templates: list[TransitionTemplate] = field(default_factory=list)
    records: list[TtVisitRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.templates)

    def add(self, template: TransitionTemplate, record: TtVisitRecord) -> int:
        """Append a template with its record (stored trimmed); returns its index."""
        self.templates.append(TransitionTemplate(trim(template.probs), template.reward))
        self.records.append(TtVisitRecord(trim(record.ordered_counts), record.reward_sum))
        return len(self.templates) - 1

    def total_counts(self) -> int:
        return sum(r.total for r in self.records)

    def dumps(self) -> str:
        return dumps_library(self)

    def save(self, path) -> None:
        Path(path).write_text(dumps_library(self))

    @classmethod
    def load(cls, path) -> "TemplateLibrary":
        return loads_library(Path(path).read_text())


def gen_tt(counts, reward_sum: float) -> tuple[TransitionTemplate, TtVisitRecord, RankingPermutation]:
    """Template, pooled-visit record and ranking permutation of one count vector."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total < 1:
        raise ValueError("cannot build a template from zero visits")
    sigma = RankingPermutation.of(counts)
    ordered = sigma.apply(counts)
    record = TtVisitRecord(ordered, reward_sum)
    template = TransitionTemplate(ordered / total, reward_sum / total)
    return template, record, sigma


def tt_update(
    template_index: int,
    library: TemplateLibrary,
    counts,
    reward_sum: float,
    sigma: RankingPermutation | None = None,
) -> None:
    """Pool ``counts`` into a template and renormalise it.

    Counts are rank-ordered by sorting them, or by ``sigma`` when given (the
    pair's frozen ranking). The pooled vector is re-sorted afterwards so the
    template stays non-increasing; it grows when ``counts`` is longer.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.sum() == 0 and reward_sum == 0:
        return
    ordered = sigma.apply(counts) if sigma is not None else np.sort(counts)[::-1]
    record = library.records[template_index]
    n = max(len(record.ordered_counts), len(ordered))
    pooled = pad(record.ordered_counts, n) + pad(ordered, n)
    record.ordered_counts = trim(np.sort(pooled)[::-1].copy())
    record.reward_sum += float(reward_sum)
    library.templates[template_index] = record.template()


def augment(
    template_index: int,
    library: TemplateLibrary,
    own_counts,
    own_reward: float,
    sigma: RankingPermutation,
) -> tuple[np.ndarray, float]:
    """Pooled counts of a template mapped into a pair's state ordering.

    ``own_counts``/``own_reward`` are not modified: the caller keeps the
    returned augmented counts separately from the pair's own counts.
    """
    own_counts = np.asarray(own_counts)
    S = len(own_counts)
    if len(sigma) != S:
        raise ValueError(f"ranking permutation has length {len(sigma)}, pair has {S} next states")
    record = library.records[template_index]
    pooled = record.ordered_counts
    if len(pooled) > S:
        if np.any(pooled[S:] > 0):
            raise ValueError(
                f"template support {np.count_nonzero(pooled)} exceeds the pair's {S} next states"
            )
        pooled = pooled[:S]
    return sigma.invert(pad(pooled, S)).astype(np.int64), float(record.reward_sum)


def tt_distance(a: TransitionTemplate, b: TransitionTemplate) -> float:
    """l2 distance of the zero-padded probability parts plus |reward gap|."""
    n = max(len(a.probs), len(b.probs))
    return float(np.linalg.norm(pad(a.probs, n) - pad(b.probs, n)) + abs(a.reward - b.reward))


def find_closest(library: TemplateLibrary, candidate: TransitionTemplate, gap: float) -> int | None:
    """Index of the nearest template if strictly closer than ``gap``.

    Equidistant templates resolve to the lowest index.
    """
    if gap < 0:
        raise ValueError("gap must be non-negative")
    best, best_d = None, np.inf
    for i, g in enumerate(library.templates):
        d = tt_distance(g, candidate)
        if d < best_d:
            best, best_d = i, d
    if best is not None and best_d < gap:
        return best
    return None


# -- persistence -------------------------------------------------------------

LIBRARY_HEADER = "# temple template library v1: support<TAB>probs<TAB>reward<TAB>counts<TAB>reward_sum"


def _fmt(xs: Iterable) -> str:
    return ",".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(int(x)) for x in xs)


def dumps_library(library: TemplateLibrary) -> str:
    lines = [LIBRARY_HEADER]
    for g, rec in zip(library.templates, library.records):
        counts = trim(rec.ordered_counts)
        probs = pad(trim(g.probs), len(counts))
        lines.append(
            "\t".join(
                [str(len(counts)), _fmt(probs), repr(g.reward), _fmt(counts), repr(rec.reward_sum)]
            )
        )
    return "\n".join(lines) + "\n"


def loads_library(text: str) -> TemplateLibrary:
    lib = TemplateLibrary()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 tab-separated fields")
        support = int(parts[0])
        counts = np.array([int(x) for x in parts[3].split(",")], dtype=np.int64)
        if len(counts) != support:
            raise ValueError(f"line {lineno}: support {support} but {len(counts)} counts")
        record = TtVisitRecord(counts, float(parts[4]))
        lib.templates.append(record.template())
        lib.records.append(record)
    return lib
