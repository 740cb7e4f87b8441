# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops; semantics match ``temple._pykernels`` exactly."""

from libc.math cimport fabs, INFINITY

cdef enum:
    EPISODE = 0
    T = 1
    STATE = 2
    GLOBAL_STEP = 3
    UNKNOWN_VISITS = 4
    STEPS_TO_MS = 5
    MS_PAIRS = 6
    EVENT_S = 7
    EVENT_A = 8

cdef enum:
    CUM_REWARD = 0
    DISC_RETURN = 1
    DISC_FACTOR = 2

DONE = 0
EVENT = 1


def bellman_sweeps(const double[:, :, ::1] P, const double[:, ::1] R, double gamma,
                   double tol, long long max_iters, double[::1] V):
    cdef Py_ssize_t S = P.shape[0], A = P.shape[1]
    cdef Py_ssize_t s, a, j
    cdef long long it
    cdef double q, best, acc, diff, residual = INFINITY
    cdef double[::1] new = V.copy()
    for it in range(1, max_iters + 1):
        residual = 0.0
        for s in range(S):
            best = -INFINITY
            for a in range(A):
                acc = 0.0
                for j in range(S):
                    acc += P[s, a, j] * V[j]
                q = R[s, a] + gamma * acc
                if q > best:
                    best = q
            new[s] = best
            diff = fabs(best - V[s])
            if diff > residual:
                residual = diff
        V[:] = new
        if residual <= tol:
            return it, residual
    return max_iters, residual


cdef inline Py_ssize_t _sample(const double[::1] row, double u) nogil:
    # first index with row[j] > u, clamped to the last index
    cdef Py_ssize_t j = 0, n = row.shape[0]
    while j < n - 1 and row[j] <= u:
        j += 1
    return j


def advance(const double[:, :, ::1] cdf,
            const double[::1] start_cdf,
            const double[:, ::1] reward,
            const double[:, ::1] raw_reward,
            const unsigned char[::1] terminal,
            const long long[::1] policy,
            const double[::1] uniforms,
            long long[:, :, ::1] own_counts,
            long long[:, ::1] own_total,
            double[:, ::1] own_reward,
            const long long[:, ::1] aug_total,
            const unsigned char[:, ::1] known,
            const unsigned char[:, ::1] identified,
            long long small_threshold,
            long long regular_threshold,
            bint identify_known,
            long long ms_metric,
            long long steps_per_episode,
            long long n_episodes,
            double gamma,
            long long[::1] cursor,
            double[::1] totals,
            long long[:, ::1] trace):
    cdef Py_ssize_t S = own_total.shape[0], A = own_total.shape[1]
    cdef Py_ssize_t i, s, a, s2
    cdef long long n_nonterminal = 0
    cdef long long stride = steps_per_episode + 1
    cdef bint record = trace.shape[0] > 0
    cdef long long episode = cursor[EPISODE], t = cursor[T]
    cdef long long g = cursor[GLOBAL_STEP]
    cdef long long unknown_visits = cursor[UNKNOWN_VISITS]
    cdef long long steps_to_ms = cursor[STEPS_TO_MS], ms_pairs = cursor[MS_PAIRS]
    cdef long long base, n_sa
    cdef double cum = totals[CUM_REWARD], disc_ret = totals[DISC_RETURN]
    cdef double disc = totals[DISC_FACTOR], raw
    cdef bint need_id, need_known
    cdef int status = DONE

    for i in range(S):
        if not terminal[i]:
            n_nonterminal += 1
    s = cursor[STATE]

    while episode < n_episodes:
        base = episode * stride
        if t == 0:
            s = _sample(start_cdf, uniforms[base])
            disc = 1.0
        a = policy[s]
        s2 = _sample(cdf[s, a], uniforms[base + 1 + t])
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
        need_id = (small_threshold > 0 and n_sa == small_threshold
                   and not identified[s, a] and (identify_known or not known[s, a]))
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
