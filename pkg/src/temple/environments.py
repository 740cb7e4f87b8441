"""Landform mazes and the task distributions built on them.

A maze cell's landform is its slipping probability: the intended move
happens with probability ``1 - slip`` and each of the two perpendicular moves
with ``slip / 2``. Moves that would leave the grid keep the agent in place.
The goal cell is absorbing and ends the episode after the agent acts there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngs
from .mdp import EpisodicTask, TabularMdp
from .templates import TransitionTemplate, trim

SAND, MARBLE, ICE = 0.0, 0.2, 0.4
LANDFORMS = (SAND, MARBLE, ICE)
LANDFORM_CODES = {"S": SAND, "M": MARBLE, "I": ICE}

# (d_row, d_col) for up, down, left, right, then the four diagonals
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))
ACTION_NAMES = ("up", "down", "left", "right", "up-left", "up-right", "down-left", "down-right")
UP, DOWN, LEFT, RIGHT = range(4)
SLIPS_TO = {
    0: (2, 3), 1: (2, 3), 2: (0, 1), 3: (0, 1),
    # a diagonal slips to the two diagonals adjacent to it
    4: (5, 6), 5: (4, 7), 6: (4, 7), 7: (5, 6),
}


@dataclass(frozen=True)
class LandformMaze:
    width: int
    height: int
    slips: tuple[float, ...]
    goal: int | None = None
    goal_reward: float = 1.0
    step_cost: float = 0.2
    num_actions: int = 4
    start: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("maze dimensions must be positive")
        slips = tuple(float(x) for x in self.slips)
        if len(slips) != self.width * self.height:
            raise ValueError(f"need {self.width * self.height} slip values, got {len(slips)}")
        if any(not 0.0 <= x < 1.0 for x in slips):
            raise ValueError("slipping probabilities must lie in [0, 1)")
        if self.goal is not None and not 0 <= self.goal < self.num_states:
            raise ValueError("goal outside the grid")
        if not 0 <= self.start < self.num_states:
            raise ValueError("start outside the grid")
        if self.num_actions not in (4, 8):
            raise ValueError("mazes have 4 or 8 actions")
        object.__setattr__(self, "slips", slips)

    @property
    def num_states(self) -> int:
        return self.width * self.height

    def cell(self, row: int, col: int) -> int:
        return row * self.width + col

    def coords(self, state: int) -> tuple[int, int]:
        return divmod(state, self.width)

    @classmethod
    def uniform(cls, width: int, height: int, slip: float, **kw) -> "LandformMaze":
        return cls(width, height, (slip,) * (width * height), **kw)


def _target(maze: LandformMaze, state: int, action: int) -> int:
    r, c = maze.coords(state)
    dr, dc = MOVES[action]
    r2, c2 = r + dr, c + dc
    if 0 <= r2 < maze.height and 0 <= c2 < maze.width:
        return maze.cell(r2, c2)
    return state


def reward_scale(maze: LandformMaze) -> tuple[float, float]:
    """Affine map ``raw -> (raw + step_cost) / span`` taking rewards into [0, 1]."""
    span = maze.goal_reward + maze.step_cost
    return maze.step_cost, (span if span > 0 else 1.0)


def maze_raw_reward(maze: LandformMaze) -> np.ndarray:
    raw = np.full((maze.num_states, maze.num_actions), -maze.step_cost)
    if maze.goal is not None:
        raw[maze.goal] = maze.goal_reward
    return raw


def build_maze_mdp(maze: LandformMaze, discount: float = 0.95) -> TabularMdp:
    S, A = maze.num_states, maze.num_actions
    P = np.zeros((S, A, S))
    for s in range(S):
        if s == maze.goal:
            P[s, :, s] = 1.0
            continue
        slip = maze.slips[s]
        for a in range(A):
            P[s, a, _target(maze, s, a)] += 1.0 - slip
            for b in SLIPS_TO[a]:
                P[s, a, _target(maze, s, b)] += slip / 2.0
    offset, span = reward_scale(maze)
    R = np.clip((maze_raw_reward(maze) + offset) / span, 0.0, 1.0)
    mu = np.zeros(S)
    mu[maze.start] = 1.0
    terminal = np.zeros(S, dtype=bool)
    if maze.goal is not None:
        terminal[maze.goal] = True
    return TabularMdp(P, R, mu, discount, terminal)


def maze_task(maze: LandformMaze, discount: float = 0.95, name: str = "") -> EpisodicTask:
    return EpisodicTask(build_maze_mdp(maze, discount), maze_raw_reward(maze), name)


def true_template(mdp: TabularMdp, state: int, action: int) -> TransitionTemplate:
    row = np.sort(mdp.transition[state, action])[::-1]
    return TransitionTemplate(trim(row), float(mdp.reward[state, action]))


def ground_truth_templates(maze_or_mdp: LandformMaze | TabularMdp, discount: float = 0.95) -> list[TransitionTemplate]:
    """Distinct exact templates of every state-action pair, in first-seen order."""
    mdp = build_maze_mdp(maze_or_mdp, discount) if isinstance(maze_or_mdp, LandformMaze) else maze_or_mdp
    seen: dict[tuple, TransitionTemplate] = {}
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            g = true_template(mdp, s, a)
            key = (tuple(np.round(g.probs, 12)), round(g.reward, 12))
            seen.setdefault(key, g)
    return list(seen.values())


# -- task distributions ------------------------------------------------------

KINDS = ("landform", "two-goal", "gaussian-mixture", "varying-size")


@dataclass(frozen=True)
class TaskDistribution:
    """How a run's task sequence is generated.

    ``landform``: every cell uniformly one of ``slips``; goal bottom-right.
    ``two-goal``: one landform layout per seed, goal drawn from ``goals``.
    ``gaussian-mixture``: slips from an equal-weight normal mixture, clamped.
    ``varying-size``: square mazes following ``sizes`` in blocks of ``block``.
    """

    kind: str = "landform"
    seed: int = 0
    width: int = 4
    height: int = 4
    slips: tuple[float, ...] = LANDFORMS
    goals: tuple[tuple[int, int], ...] | None = None
    centers: tuple[float, ...] = (0.2, 0.4, 0.6)
    std: float = 0.05
    clamp: tuple[float, float] = (0.0, 0.95)
    sizes: tuple[int, ...] = (3, 4, 5, 6)
    block: int = 20
    goal_reward: float = 1.0
    step_cost: float = 0.2
    num_actions: int = 4
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown task distribution {self.kind!r}; choose from {KINDS}")

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "TaskDistribution":
        d = dict(d)
        for key in ("slips", "centers", "clamp", "sizes"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("goals") is not None:
            d["goals"] = tuple(tuple(g) for g in d["goals"])
        if seed is not None:
            d["seed"] = seed
        return cls(**d)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind, "width": self.width, "height": self.height,
            "slips": list(self.slips), "centers": list(self.centers), "std": self.std,
            "clamp": list(self.clamp), "sizes": list(self.sizes), "block": self.block,
            "goal_reward": self.goal_reward, "step_cost": self.step_cost,
            "num_actions": self.num_actions,
        }
        if self.goals is not None:
            out["goals"] = [list(g) for g in self.goals]
        return out

    def two_goal_cells(self) -> tuple[tuple[int, int], ...]:
        if self.goals is not None:
            return self.goals
        return ((0, self.width - 1), (self.height - 1, 0))


def _maze(dist: TaskDistribution, w: int, h: int, slips, goal: int) -> LandformMaze:
    return LandformMaze(
        w, h, tuple(slips), goal, dist.goal_reward, dist.step_cost, dist.num_actions
    )


def sample_task(dist: TaskDistribution, index: int) -> LandformMaze:
    """The ``index``-th maze of the sequence; a pure function of (dist, index)."""
    if index < 0:
        raise ValueError("task index must be non-negative")
    rng = rngs.stream(dist.seed, rngs.TASK, index)
    w, h = dist.width, dist.height
    if dist.kind == "landform":
        slips = rng.choice(dist.slips, size=w * h)
        return _maze(dist, w, h, slips, w * h - 1)
    if dist.kind == "two-goal":
        layout = rngs.stream(dist.seed, rngs.LAYOUT).choice(dist.slips, size=w * h)
        cells = dist.two_goal_cells()
        r, c = cells[int(rng.integers(len(cells)))]
        return _maze(dist, w, h, layout, r * w + c)
    if dist.kind == "gaussian-mixture":
        comp = rng.integers(len(dist.centers), size=w * h)
        slips = np.asarray(dist.centers)[comp] + dist.std * rng.standard_normal(w * h)
        slips = np.clip(slips, *dist.clamp)
        return _maze(dist, w, h, slips, w * h - 1)
    # varying-size
    size = dist.sizes[min(index // dist.block, len(dist.sizes) - 1)]
    slips = rng.choice(dist.slips, size=size * size)
    return _maze(dist, size, size, slips, size * size - 1)


# -- text format -------------------------------------------------------------

MAZE_HEADER = "# temple maze v1"


def _code(slip: float) -> str:
    for code, value in LANDFORM_CODES.items():
        if slip == value:
            return code
    return repr(float(slip))


def dumps_maze(maze: LandformMaze) -> str:
    goal = "none" if maze.goal is None else "%d %d" % maze.coords(maze.goal)
    lines = [
        MAZE_HEADER,
        f"size {maze.width} {maze.height}",
        f"actions {maze.num_actions}",
        "start %d %d" % maze.coords(maze.start),
        f"goal {goal}",
        f"goal_reward {maze.goal_reward!r}",
        f"step_cost {maze.step_cost!r}",
        "grid",
    ]
    for r in range(maze.height):
        lines.append(" ".join(_code(maze.slips[maze.cell(r, c)]) for c in range(maze.width)))
    return "\n".join(lines) + "\n"


def loads_maze(text: str) -> LandformMaze:
    fields: dict[str, list[str]] = {}
    grid: list[list[str]] = []
    in_grid = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if in_grid:
            grid.append(line.split())
            continue
        key, *rest = line.split()
        if key == "grid":
            in_grid = True
        else:
            fields[key] = rest
    try:
        width, height = (int(x) for x in fields["size"])
    except KeyError as exc:
        raise ValueError("maze text lacks a 'size' line") from exc
    if len(grid) != height or any(len(row) != width for row in grid):
        raise ValueError(f"grid must be {height} rows of {width} codes")
    slips = [LANDFORM_CODES[t] if t in LANDFORM_CODES else float(t) for row in grid for t in row]
    goal = None
    if fields.get("goal", ["none"]) != ["none"]:
        gr, gc = (int(x) for x in fields["goal"])
        goal = gr * width + gc
    sr, sc = (int(x) for x in fields.get("start", ["0", "0"]))
    return LandformMaze(
        width, height, tuple(slips), goal,
        goal_reward=float(fields.get("goal_reward", ["1.0"])[0]),
        step_cost=float(fields.get("step_cost", ["0.2"])[0]),
        num_actions=int(fields.get("actions", ["4"])[0]),
        start=sr * width + sc,
    )


def save_maze(maze: LandformMaze, path) -> None:
    Path(path).write_text(dumps_maze(maze))


def load_maze(path) -> LandformMaze:
    return loads_maze(Path(path).read_text())
