"""Pure-Python implementations of the hot loops.

These mirror ``_ckernels.pyx`` statement for statement so that both backends
consume the uniform stream identically and produce the same trajectories.
"""
from __future__ import annotations

from bisect import bisect_right

import numpy as np

# cursor slots shared with the compiled kernel
EPISODE, T, STATE, GLOBAL_STEP, UNKNOWN_VISITS, STEPS_TO_MS, MS_PAIRS, EVENT_S, EVENT_A = range(9)
CUM_REWARD, DISC_RETURN, DISC_FACTOR = range(3)

DONE = 0
EVENT = 1


def bellman_sweeps(P, R, gamma, tol, max_iters, V):
    """Jacobi value-iteration sweeps, updating ``V`` in place.

    Returns ``(iterations, last_residual)``; iteration stops as soon as the
    sup-norm change of one sweep is ``<= tol``.
    """
    residual = np.inf
    for it in range(1, max_iters + 1):
        Q = R + gamma * (P @ V)
        new = Q.max(axis=1)
        residual = float(np.max(np.abs(new - V))) if V.size else 0.0
        V[:] = new
        if residual <= tol:
            return it, residual
    return max_iters, residual


def _sample(row, u):
    j = bisect_right(row, u)
    return j if j < len(row) else len(row) - 1


def advance(
    cdf,
    start_cdf,
    reward,
    raw_reward,
    terminal,
    policy,
    uniforms,
    own_counts,
    own_total,
    own_reward,
    aug_total,
    known,
    identified,
    small_threshold,
    regular_threshold,
    identify_known,
    ms_metric,
    steps_per_episode,
    n_episodes,
    gamma,
    cursor,
    totals,
    trace,
):
    """Run the interaction loop until a pair needs attention or the horizon ends.

    Returns ``EVENT`` with the pair stored in ``cursor[EVENT_S], cursor[EVENT_A]``
    after its transition has been recorded, or ``DONE``.
    """
    S, A = own_total.shape
    rows = cdf.tolist()
    start_row = start_cdf.tolist()
    n_nonterminal = int(S - np.count_nonzero(terminal))
    stride = steps_per_episode + 1
    record = trace.shape[0] > 0

    episode = int(cursor[EPISODE])
    t = int(cursor[T])
    s = int(cursor[STATE])
    g = int(cursor[GLOBAL_STEP])
    unknown_visits = int(cursor[UNKNOWN_VISITS])
    steps_to_ms = int(cursor[STEPS_TO_MS])
    ms_pairs = int(cursor[MS_PAIRS])
    cum = float(totals[CUM_REWARD])
    disc_ret = float(totals[DISC_RETURN])
    disc = float(totals[DISC_FACTOR])

    status = DONE
    while episode < n_episodes:
        base = episode * stride
        if t == 0:
            s = _sample(start_row, uniforms[base])
            disc = 1.0
        a = int(policy[s])
        s2 = _sample(rows[s][a], uniforms[base + 1 + t])
        raw = raw_reward[s, a]
        cum += raw
        disc_ret += disc * raw
        disc *= gamma
        if not known[s, a]:
            unknown_visits += 1
        own_counts[s, a, s2] += 1
        own_total[s, a] += 1
        own_reward[s, a] += reward[s, a]
        n_sa = own_total[s, a]
        if record:
            trace[g, 0] = s
            trace[g, 1] = a
            trace[g, 2] = s2
        g += 1
        if n_sa == ms_metric and not terminal[s]:
            ms_pairs += 1
            if ms_pairs == n_nonterminal * A and steps_to_ms < 0:
                steps_to_ms = g
        t += 1
        if terminal[s] or t == steps_per_episode:
            episode += 1
            t = 0
        need_id = (
            small_threshold > 0
            and n_sa == small_threshold
            and not identified[s, a]
            and (identify_known or not known[s, a])
        )
        need_known = (not known[s, a]) and n_sa + aug_total[s, a] >= regular_threshold
        if need_id or need_known:
            cursor[EVENT_S] = s
            cursor[EVENT_A] = a
            s = s2
            status = EVENT
            break
        s = s2

    cursor[EPISODE] = episode
    cursor[T] = t
    cursor[STATE] = s
    cursor[GLOBAL_STEP] = g
    cursor[UNKNOWN_VISITS] = unknown_visits
    cursor[STEPS_TO_MS] = steps_to_ms
    cursor[MS_PAIRS] = ms_pairs
    totals[CUM_REWARD] = cum
    totals[DISC_RETURN] = disc_ret
    totals[DISC_FACTOR] = disc
    return status
