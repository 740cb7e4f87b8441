"""Seeded multi-task experiments, CSV output, parameter sweeps.

Each seed fixes a task sequence (see :mod:`temple.rng`). Learners run the
sequence in order; seeds are independent and may run in worker processes.
Rows are always merged in ``(seed, task_index)`` order, and ``wall_ms`` is
written as 0 unless timing is requested, so identical configs give
byte-identical CSV files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import rng as rngs
from .environments import (
    LandformMaze,
    TaskDistribution,
    ground_truth_templates,
    maze_task,
    sample_task,
    true_template,
)
from .fmtemple import FMTempLe
from .learners import run_q_task, run_rmax_task
from .otemple import OTempLe
from .templates import TemplateLibrary, find_closest, gen_tt, tt_distance, tt_update

LEARNERS = ("otemple", "fmtemple", "rmax-single", "qlearning-single")
CSV_VERSION = "# temple metrics v1"
RUN_COLUMNS = (
    "seed", "task_index", "learner", "cum_reward", "disc_return",
    "unknown_visits", "num_templates", "steps_to_ms_known", "wall_ms",
)
MEAN_COLUMNS = (
    "task_index", "learner", "seeds", "cum_reward", "disc_return",
    "unknown_visits", "num_templates", "steps_to_ms_known", "wall_ms",
)
OUTPUT_ENV = "TEMPLE_OUTPUT_DIR"

PRESETS = {
    "desk": {"episodes": 300, "steps": 30, "num_tasks": 30, "seeds": [0, 1, 2, 3, 4]},
    "full": {"episodes": 3000, "steps": 30, "num_tasks": 50, "seeds": list(range(20))},
}


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` maps field name to message."""

    def __init__(self, errors: dict[str, str]):
        super().__init__("; ".join(f"{k}: {v}" for k, v in errors.items()))
        self.errors = errors


@dataclass
class RunConfig:
    learner: str = "otemple"
    tasks: dict = field(default_factory=lambda: {"kind": "landform"})
    gap: float | None = None  # None: 0.15 online, 0.24 finite-model
    regular_threshold: int = 500
    small_threshold: int = 50
    discount: float = 0.95
    phase1_tasks: int = 15
    model_gap: float = 0.6
    eta: int = 1
    tie_tolerance: float = 0.2
    identify_known: bool = True
    templates: bool = True
    learning_rate: float = 0.1
    exploration: float = 0.1
    episodes: int = 300
    steps: int = 30
    num_tasks: int = 30
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output: str | None = None
    workers: int = 1
    timing: bool = False
    annotations: dict = field(default_factory=dict)  # e.g. true tau, nu; never read by learners

    def effective_gap(self) -> float:
        if self.gap is not None:
            return self.gap
        return 0.24 if self.learner == "fmtemple" else 0.15

    def validate(self) -> "RunConfig":
        errors: dict[str, str] = {}
        if self.learner not in LEARNERS:
            errors["learner"] = f"must be one of {', '.join(LEARNERS)}"
        for name in ("regular_threshold", "small_threshold", "phase1_tasks", "eta",
                     "episodes", "steps", "num_tasks", "workers"):
            if int(getattr(self, name)) < 1:
                errors[name] = "must be a positive integer"
        if self.small_threshold > self.regular_threshold:
            errors["small_threshold"] = "must not exceed regular_threshold"
        if self.gap is not None and self.gap < 0:
            errors["gap"] = "must be non-negative"
        if self.model_gap <= 0:
            errors["model_gap"] = "must be positive"
        if not 0.0 < self.discount < 1.0:
            errors["discount"] = "must lie in (0, 1)"
        if not 0.0 <= self.exploration <= 1.0:
            errors["exploration"] = "must lie in [0, 1]"
        if not 0.0 <= self.learning_rate <= 1.0:
            errors["learning_rate"] = "must lie in [0, 1]"
        if not self.seeds:
            errors["seeds"] = "must be non-empty"
        try:
            TaskDistribution.from_dict(self.tasks)
        except (TypeError, ValueError) as exc:
            errors["tasks"] = str(exc)
        if errors:
            raise ConfigError(errors)
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError({k: "unknown field" for k in unknown})
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    config: RunConfig
    rows: list[dict]

    def column(self, name: str, seed: int | None = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if seed is None or r["seed"] == seed])

    def per_seed(self, name: str = "cum_reward") -> np.ndarray:
        """Array of shape (seeds, tasks)."""
        seeds = sorted({r["seed"] for r in self.rows})
        return np.array([self.column(name, s) for s in seeds])

    def mean_curve(self, name: str = "cum_reward") -> np.ndarray:
        return self.per_seed(name).mean(axis=0)

    def mean_rows(self) -> list[dict]:
        return seed_average(self.rows)


# -- running -----------------------------------------------------------------


def task_stream(config: RunConfig, seed: int):
    dist = TaskDistribution.from_dict(config.tasks, seed=seed)
    for i in range(config.num_tasks):
        yield i, maze_task(sample_task(dist, i), config.discount, name=f"task-{i}")


def make_learner(config: RunConfig):
    if config.learner == "otemple":
        return OTempLe(
            config.effective_gap(), config.small_threshold, config.regular_threshold,
            config.discount, config.identify_known, config.templates,
        )
    if config.learner == "fmtemple":
        return FMTempLe(
            config.effective_gap(), config.model_gap, config.phase1_tasks, config.eta,
            config.small_threshold, config.regular_threshold, config.discount,
            config.tie_tolerance, config.identify_known,
        )
    return None


def run_seed(config: RunConfig, seed: int) -> list[dict]:
    learner = make_learner(config)
    rows = []
    for i, task in task_stream(config, seed):
        interact = rngs.stream(seed, rngs.INTERACT, i)
        if config.learner in ("otemple", "fmtemple"):
            m, _ = learner.run_task(task, config.episodes, config.steps, interact)
        elif config.learner == "rmax-single":
            _, run = run_rmax_task(
                task, config.episodes, config.steps, interact,
                config.regular_threshold, config.small_threshold,
            )
            m = run.metrics
        else:
            _, m = run_q_task(
                task, config.episodes, config.steps, interact,
                rngs.stream(seed, rngs.EXPLORE, i), config.learning_rate, config.exploration,
            )
        rows.append({
            "seed": seed, "task_index": i, "learner": config.learner,
            "cum_reward": m.cum_reward, "disc_return": m.disc_return,
            "unknown_visits": m.unknown_visits, "num_templates": m.num_templates,
            "steps_to_ms_known": m.steps_to_ms_known,
            "wall_ms": m.wall_ms if config.timing else 0.0,
        })
    return rows


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Run every seed of ``config``; write CSVs when an output path is set."""
    config.validate()
    if config.workers > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(run_seed, [config] * len(config.seeds), config.seeds))
    else:
        chunks = [run_seed(config, s) for s in config.seeds]
    rows = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r["seed"], r["task_index"]))
    result = ExperimentResult(config, rows)
    out = output_dir(config)
    if out is not None:
        write_result(result, out)
    return result


def output_dir(config: RunConfig) -> Path | None:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(config.output) if config.output else None


def write_result(result: ExperimentResult, directory: Path, stem: str | None = None) -> tuple[Path, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or result.config.learner
    runs = directory / f"{stem}_runs.csv"
    means = directory / f"{stem}_mean.csv"
    runs.write_text(rows_to_csv(result.rows, RUN_COLUMNS))
    means.write_text(rows_to_csv(result.mean_rows(), MEAN_COLUMNS))
    return runs, means


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    buf.write(CSV_VERSION + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def seed_average(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["learner"], r["task_index"]), []).append(r)
    out = []
    for (learner, i), group in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        reached = [g["steps_to_ms_known"] for g in group if g["steps_to_ms_known"] >= 0]
        out.append({
            "task_index": i, "learner": learner, "seeds": len(group),
            "cum_reward": float(np.mean([g["cum_reward"] for g in group])),
            "disc_return": float(np.mean([g["disc_return"] for g in group])),
            "unknown_visits": float(np.mean([g["unknown_visits"] for g in group])),
            "num_templates": float(np.mean([g["num_templates"] for g in group])),
            "steps_to_ms_known": float(np.mean(reached)) if reached else -1.0,
            "wall_ms": float(np.mean([g["wall_ms"] for g in group])),
        })
    return out


def paired_advantage(a: ExperimentResult, b: ExperimentResult, name: str = "cum_reward") -> np.ndarray:
    """Per-task seed average of same-seed differences ``a - b``."""
    xa, xb = a.per_seed(name), b.per_seed(name)
    if xa.shape != xb.shape:
        raise ValueError("results cover different seeds or task counts")
    return (xa - xb).mean(axis=0)


SWEEPABLE = ("gap", "model_gap")


def sweep(config: RunConfig, parameter: str, values) -> dict[float, ExperimentResult]:
    """``run_experiment`` once per value on shared seeds; one CSV keyed by value."""
    if parameter not in SWEEPABLE:
        raise ConfigError({"parameter": f"must be one of {', '.join(SWEEPABLE)}"})
    values = list(values)
    if not values:
        raise ConfigError({"values": "must be non-empty"})
    out = output_dir(config)
    results = {}
    for v in values:
        results[v] = run_experiment(replace(config, **{parameter: float(v)}, output=None))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        rows = [dict(r, value=v) for v, res in results.items() for r in res.rows]
        (out / f"sweep_{parameter}.csv").write_text(rows_to_csv(rows, ("value",) + RUN_COLUMNS))
    return results


# -- sample-savings demonstration ---------------------------------------------


@dataclass
class SavingsReport:
    pairs: int
    conventional_per_pair: int
    conventional_total: int
    identify_per_pair: int
    template_samples: int
    augmented_total: int
    ratio: float
    hoeffding_conventional: float
    hoeffding_augmented: float

    def lines(self) -> list[str]:
        return [
            f"state-action pairs             {self.pairs}",
            f"conventional samples per pair  {self.conventional_per_pair}",
            f"conventional total             {self.conventional_total}",
            f"identification samples / pair  {self.identify_per_pair}",
            f"extra template samples         {self.template_samples}",
            f"augmented total                {self.augmented_total}",
            f"ratio augmented/conventional   {self.ratio:.4f}",
            f"Hoeffding-order conventional   {self.hoeffding_conventional:.3g}",
            f"Hoeffding-order augmented      {self.hoeffding_augmented:.3g}",
        ]


def _min_n(success, lo: int = 1, hi_cap: int = 10**8) -> int:
    """Smallest n with ``success(n)``, assuming monotone success in n."""
    if success(lo):
        return lo
    hi = lo * 2
    while not success(hi):
        lo, hi = hi, hi * 2
        if hi > hi_cap:
            raise RuntimeError("sample requirement exceeds search cap")
    while hi - lo > max(1, lo // 100):
        mid = (lo + hi) // 2
        if success(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _pair_dynamics(maze: LandformMaze, discount: float = 0.95):
    mdp = maze_task(maze, discount).mdp
    probs = mdp.transition.reshape(-1, mdp.num_states)
    keys = []
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            g = true_template(mdp, s, a)
            keys.append((tuple(np.round(g.probs, 12)), round(g.reward, 12)))
    return probs, keys, mdp.reward.ravel()


def _conventional_ok(probs, accuracy, n, trials, rng) -> float:
    draws = rng.multinomial(n, probs, size=(trials, len(probs)))
    err = np.linalg.norm(draws / n - probs[None], axis=2).max(axis=1)
    return float(np.mean(err <= accuracy))


def _identify(probs, keys, rewards, n, gap, rng):
    """Identify every pair from ``n`` samples; return (correct, library, sigmas, counts)."""
    lib = TemplateLibrary()
    assigned, sigmas, counts = [], [], rng.multinomial(n, probs)
    for k in range(len(probs)):
        cand, record, sigma = gen_tt(counts[k], rewards[k] * n)
        idx = find_closest(lib, cand, gap)
        if idx is None:
            idx = lib.add(cand, record)
        else:
            tt_update(idx, lib, counts[k], rewards[k] * n)
        assigned.append(idx)
        sigmas.append(sigma)
    truth_to_idx: dict = {}
    correct = len(lib) == len(set(keys))
    for key, idx in zip(keys, assigned):
        if truth_to_idx.setdefault(key, idx) != idx:
            correct = False
    correct = correct and len(set(truth_to_idx.values())) == len(truth_to_idx)
    return correct, lib, assigned, sigmas


def _templates_ok(probs, keys, assigned, sigmas, pooled, extra, accuracy, rng) -> bool:
    """Add ``extra`` samples per template (spread over its pairs) and test accuracy."""
    S = probs.shape[1]
    groups: dict[int, list[int]] = {}
    for k, idx in enumerate(assigned):
        groups.setdefault(idx, []).append(k)
    for idx, members in groups.items():
        total = pooled[idx].copy()
        share = np.full(len(members), extra // len(members))
        share[: extra % len(members)] += 1
        for k, m in zip(members, share):
            if m:
                total[: S] += sigmas[k].apply(rng.multinomial(int(m), probs[k]))
        truth = np.sort(probs[members[0]])[::-1]
        if total.sum() == 0 or np.linalg.norm(total / total.sum() - truth) > accuracy:
            return False
    return True


def estimate_savings_demo(
    size: int = 5,
    slip: float = 0.4,
    accuracy: float = 0.01,
    confidence: float = 0.95,
    gap: float = 0.15,
    trials: int = 200,
    seed: int = 0,
) -> SavingsReport:
    """Samples for all pairs' estimates within ``accuracy``: per-pair vs pooled.

    Any pair may be sampled directly. The conventional estimator needs every
    pair individually accurate. The augmented one first identifies each
    pair's template (with probability ``1 - delta/2``), then pools samples
    per template, in ranking order, until each template is accurate (again
    ``1 - delta/2``).
    """
    maze = LandformMaze.uniform(size, size, slip, goal=None, step_cost=0.0)
    probs, keys, rewards = _pair_dynamics(maze)
    pairs = len(probs)
    delta = 1.0 - confidence
    G = len(set(keys))

    def conv(n):
        return _conventional_ok(probs, accuracy, n, trials, rngs.stream(seed, rngs.DEMO, 0, n)) >= confidence

    n_conv = _min_n(conv)

    def ident(n):
        rng = rngs.stream(seed, rngs.DEMO, 1, n)
        ok = sum(_identify(probs, keys, rewards, n, gap, rng)[0] for _ in range(trials))
        return ok / trials >= 1.0 - delta / 2

    n_id = _min_n(ident)

    def tmpl(extra, reuse=False):
        rng = rngs.stream(seed, rngs.DEMO, 2, extra)
        ok = 0
        for _ in range(trials):
            correct, lib, assigned, sigmas = _identify(probs, keys, rewards, n_id, gap, rng)
            if not correct:
                continue
            # identification draws were sorted, which biases near-tied
            # entries upward, so by default only later ranked draws are pooled
            pooled = {i: np.zeros(probs.shape[1]) for i in range(len(lib))}
            if reuse:
                for i, rec in enumerate(lib.records):
                    pooled[i][: len(rec.ordered_counts)] = rec.ordered_counts
            ok += _templates_ok(probs, keys, assigned, sigmas, pooled, extra, accuracy, rng)
        return ok / trials >= 1.0 - delta / 2

    # nothing more is drawn if the identification pool is already accurate
    extra = 0 if tmpl(0, reuse=True) else _min_n(tmpl)
    augmented = pairs * n_id + G * extra
    conventional = pairs * n_conv
    return SavingsReport(
        pairs=pairs,
        conventional_per_pair=n_conv,
        conventional_total=conventional,
        identify_per_pair=n_id,
        template_samples=G * extra,
        augmented_total=augmented,
        ratio=augmented / conventional,
        hoeffding_conventional=pairs * hoeffding_samples(accuracy, delta / pairs),
        hoeffding_augmented=(
            pairs * hoeffding_samples(_true_gap(maze), delta / 2 / pairs)
            + G * hoeffding_samples(accuracy, delta / 2 / G)
        ),
    )


def hoeffding_samples(accuracy: float, delta: float) -> float:
    """Order-of-magnitude count ``ln(1/delta) / accuracy^2`` for one estimate."""
    return math.log(1.0 / delta) / accuracy**2


def _true_gap(maze: LandformMaze) -> float:
    gs = ground_truth_templates(maze)
    if len(gs) < 2:
        return 1.0
    return min(tt_distance(a, b) for i, a in enumerate(gs) for b in gs[i + 1:])
