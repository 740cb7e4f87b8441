"""Tabular MDPs: representation, simulation and exact solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

PROB_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Value iteration did not reach the requested tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"value iteration did not converge in {iterations} iterations "
            f"(last residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """A finite MDP ``<S, A, p, r, mu, gamma>`` with rewards in [0, 1].

    ``terminal`` marks absorbing states that end an episode once acted in;
    it does not change the discounted-value semantics.
    """

    transition: np.ndarray
    reward: np.ndarray
    start_dist: np.ndarray
    discount: float = 0.95
    terminal: np.ndarray | None = None

    def __post_init__(self):
        P = np.ascontiguousarray(self.transition, dtype=float)
        R = np.ascontiguousarray(self.reward, dtype=float)
        mu = np.ascontiguousarray(self.start_dist, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValueError("an MDP needs at least one state and one action")
        if R.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {R.shape}")
        if mu.shape != (S,):
            raise ValueError(f"start_dist must have shape {(S,)}, got {mu.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ValueError("transition probabilities must lie in [0, 1]")
        if np.any(np.abs(P.sum(axis=2) - 1.0) > PROB_TOL):
            raise ValueError("every transition row must sum to 1")
        if np.any(R < 0) or np.any(R > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > PROB_TOL:
            raise ValueError("start_dist must be a probability vector")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        term = np.zeros(S, dtype=bool) if self.terminal is None else np.asarray(self.terminal, dtype=bool)
        if term.shape != (S,):
            raise ValueError("terminal mask must have one entry per state")
        for name, arr in (("transition", P), ("reward", R), ("start_dist", mu), ("terminal", term)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.discount)


@dataclass(frozen=True)
class SaDynamics:
    """Transition row and reward of a single state-action pair."""

    probs: np.ndarray
    reward: float

    def as_vector(self) -> np.ndarray:
        """The length-(S+1) vector with the reward appended."""
        return np.append(self.probs, self.reward)


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic policy: one action index per state."""

    action_of: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.action_of, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "action_of", arr)

    def __getitem__(self, state: int) -> int:
        return int(self.action_of[state])

    def __eq__(self, other):
        return isinstance(other, Policy) and np.array_equal(self.action_of, other.action_of)

    def __hash__(self):
        return hash(self.action_of.tobytes())

    def validate(self, mdp: TabularMdp) -> None:
        if self.action_of.shape != (mdp.num_states,):
            raise ValueError("policy length does not match the number of states")
        if np.any(self.action_of < 0) or np.any(self.action_of >= mdp.num_actions):
            raise ValueError("policy refers to an action outside the action space")


@dataclass
class EpisodeTrace:
    transitions: list[tuple[int, int, float, int]] = field(default_factory=list)
    undiscounted_return: float = 0.0
    discounted_return: float = 0.0

    def __len__(self) -> int:
        return len(self.transitions)


def greedy_policy(mdp: TabularMdp, values: np.ndarray) -> Policy:
    """Greedy policy w.r.t. ``values``; ties go to the lowest action index."""
    q = mdp.reward + mdp.discount * (mdp.transition @ values)
    return Policy(np.argmax(q, axis=1))


def value_iteration(
    mdp: TabularMdp,
    tolerance: float = 1e-6,
    max_iters: int = 100_000,
    initial: np.ndarray | None = None,
) -> tuple[np.ndarray, Policy]:
    """Optimal values and a greedy policy.

    Starts from the zero vector unless ``initial`` is given. The returned
    values have Bellman residual at most ``tolerance`` in sup norm.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    V = np.zeros(mdp.num_states) if initial is None else np.array(initial, dtype=float)
    iters, residual = kernels.bellman_sweeps(
        mdp.transition, mdp.reward, mdp.discount, tolerance, max_iters, V
    )
    if residual > tolerance:
        raise ConvergenceError(residual, iters)
    return V, greedy_policy(mdp, V)


def policy_evaluation(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """Exact ``V^pi`` by solving ``(I - gamma P_pi) V = r_pi``."""
    policy.validate(mdp)
    idx = np.arange(mdp.num_states)
    P_pi = mdp.transition[idx, policy.action_of]
    r_pi = mdp.reward[idx, policy.action_of]
    return np.linalg.solve(np.eye(mdp.num_states) - mdp.discount * P_pi, r_pi)


def sa_dynamics(mdp: TabularMdp, state: int, action: int) -> SaDynamics:
    return SaDynamics(mdp.transition[state, action].copy(), float(mdp.reward[state, action]))


def sample_index(cdf: np.ndarray, u: float) -> int:
    """Inverse-CDF draw: first index whose cumulative mass exceeds ``u``."""
    j = int(np.searchsorted(cdf, u, side="right"))
    return min(j, len(cdf) - 1)


def step(mdp: TabularMdp, state: int, action: int, rng: np.random.Generator) -> tuple[int, float]:
    if not (0 <= state < mdp.num_states and 0 <= action < mdp.num_actions):
        raise IndexError(f"(state={state}, action={action}) outside the MDP")
    next_state = sample_index(np.cumsum(mdp.transition[state, action]), rng.random())
    return next_state, float(mdp.reward[state, action])


def rollout(
    mdp: TabularMdp,
    policy: Policy,
    rng: np.random.Generator,
    max_steps: int,
) -> EpisodeTrace:
    """One episode from the start distribution, capped at ``max_steps``.

    The episode ends after the agent acts in a terminal state.
    """
    trace = EpisodeTrace()
    s = sample_index(np.cumsum(mdp.start_dist), rng.random())
    disc = 1.0
    for _ in range(max_steps):
        a = policy[s]
        s2, r = step(mdp, s, a, rng)
        trace.transitions.append((s, a, r, s2))
        trace.undiscounted_return += r
        trace.discounted_return += disc * r
        disc *= mdp.discount
        if mdp.terminal[s]:
            break
        s = s2
    return trace


@dataclass(frozen=True, eq=False)
class EpisodicTask:
    """An MDP together with the unnormalised rewards used for reporting.

    Learners plan with ``mdp.reward`` (in [0, 1]); metrics accumulate
    ``raw_reward`` so curves are in the environment's own units.
    """

    mdp: TabularMdp
    raw_reward: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        raw = self.mdp.reward if self.raw_reward is None else np.asarray(self.raw_reward, dtype=float)
        if raw.shape != self.mdp.reward.shape:
            raise ValueError("raw_reward must match the MDP reward shape")
        raw = np.ascontiguousarray(raw)
        raw.setflags(write=False)
        object.__setattr__(self, "raw_reward", raw)

    @property
    def num_states(self) -> int:
        return self.mdp.num_states

    @property
    def num_actions(self) -> int:
        return self.mdp.num_actions
