"""Hot loops with a numba path and a pure-numpy fallback.

Randomness enters every kernel as arrays of pre-drawn uniforms, so the two
paths consume identical streams and (up to floating-point summation order in
``efe_backward``) produce identical results.  ``WINDPLAN_NUMBA=0`` selects the
fallback; each public function also takes ``use_numba=`` to override per call.
"""
from __future__ import annotations

import numpy as np

from ._jit import USE_NUMBA, njit


def compact(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sparse view of a transition tensor for sampling.

    Returns ``succ[s, a, j]`` (successor state) and ``cum[s, a, j]`` (cumulative
    probability), padded to the largest column support.  The last cumulative
    entry of each column is forced to exactly 1.
    """
    S, _, U = B.shape
    support = B > 0
    width = max(int(support.sum(axis=0).max()), 1)
    succ = np.zeros((S, U, width), dtype=np.int64)
    cum = np.ones((S, U, width))
    for s in range(S):
        for a in range(U):
            nz = np.flatnonzero(support[:, s, a])
            if nz.size == 0:
                raise ValueError(f"empty column (s={s}, a={a})")
            c = np.cumsum(B[nz, s, a])
            c[-1] = 1.0
            succ[s, a, : nz.size] = nz
            succ[s, a, nz.size:] = nz[-1]
            cum[s, a, : nz.size] = c
    return succ, cum


def cumulative_policy(policy: np.ndarray) -> np.ndarray:
    cum = np.cumsum(policy, axis=-1)
    cum[..., -1] = 1.0
    return cum


# -- shared scalar helpers ------------------------------------------------------

@njit
def _nb_pick(cum, u):
    n = cum.shape[0]
    for i in range(n):
        if u < cum[i]:
            return i
    return n - 1


@njit
def _nb_argmax_tie(row, u):
    m = row[0]
    for i in range(1, row.shape[0]):
        if row[i] > m:
            m = row[i]
    count = 0
    for i in range(row.shape[0]):
        if row[i] == m:
            count += 1
    pick = min(int(u * count), count - 1)
    for i in range(row.shape[0]):
        if row[i] == m:
            if pick == 0:
                return i
            pick -= 1
    return row.shape[0] - 1


def _py_pick(cum, u):
    return min(int(np.searchsorted(cum, u, side="right")), cum.shape[0] - 1)


def _py_argmax_tie(row, u):
    best = np.flatnonzero(row == row.max())
    return int(best[min(int(u * best.size), best.size - 1)])


# -- expected free energy: backward induction over steps-remaining -------------

@njit
def _nb_efe_backward(B, kl, n_steps):
    S = B.shape[1]
    U = B.shape[2]
    G = np.empty((n_steps, S, U))
    G[0] = kl
    V = np.empty(S)
    for k in range(1, n_steps):
        prev = G[k - 1]
        for s in range(S):
            m = prev[s, 0]
            for a in range(1, U):
                if prev[s, a] < m:
                    m = prev[s, a]
            z = 0.0
            acc = 0.0
            for a in range(U):
                w = np.exp(m - prev[s, a])
                z += w
                acc += w * prev[s, a]
            V[s] = acc / z
        for s in range(S):
            for a in range(U):
                tot = 0.0
                for s2 in range(S):
                    p = B[s2, s, a]
                    if p != 0.0:
                        tot += p * V[s2]
                G[k, s, a] = kl[s, a] + tot
    return G


def _np_efe_backward(B, kl, n_steps):
    S, U = kl.shape
    G = np.empty((n_steps, S, U))
    G[0] = kl
    for k in range(1, n_steps):
        prev = G[k - 1]
        w = np.exp(prev.min(axis=1, keepdims=True) - prev)
        V = (w * prev).sum(axis=1) / w.sum(axis=1)
        G[k] = kl + np.einsum("pqa,p->qa", B, V)
    return G


def efe_backward(B, kl, n_steps, use_numba=None):
    """``G[k-1, s, a]``: expected free energy with ``k`` decisions left."""
    use_numba = USE_NUMBA if use_numba is None else use_numba
    B = np.ascontiguousarray(B, dtype=np.float64)
    kl = np.ascontiguousarray(kl, dtype=np.float64)
    fn = _nb_efe_backward if use_numba else _np_efe_backward
    return fn(B, kl, int(n_steps))


# -- batched episode rollouts under a tabular (possibly time-varying) policy ----

@njit
def _nb_rollout(cum_policy, obs_map, succ, cum_trans, start, goal, horizon, u_act, u_env):
    n = u_act.shape[0]
    K = cum_policy.shape[0]
    states = np.full((n, horizon + 1), -1, dtype=np.int64)
    actions = np.full((n, horizon), -1, dtype=np.int64)
    for i in range(n):
        s = start
        states[i, 0] = s
        for t in range(horizon):
            if s == goal:
                break
            k = min(horizon - t, K)
            a = _nb_pick(cum_policy[k - 1, obs_map[s]], u_act[i, t])
            j = _nb_pick(cum_trans[s, a], u_env[i, t])
            s = succ[s, a, j]
            actions[i, t] = a
            states[i, t + 1] = s
    return states, actions


def _np_rollout(cum_policy, obs_map, succ, cum_trans, start, goal, horizon, u_act, u_env):
    n = u_act.shape[0]
    K = cum_policy.shape[0]
    n_actions = cum_policy.shape[2]
    width = cum_trans.shape[2]
    states = np.full((n, horizon + 1), -1, dtype=np.int64)
    actions = np.full((n, horizon), -1, dtype=np.int64)
    s = np.full(n, start, dtype=np.int64)
    states[:, 0] = start
    alive = s != goal
    for t in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        k = min(horizon - t, K)
        cur = s[idx]
        rows = cum_policy[k - 1, obs_map[cur]]
        a = np.minimum((rows <= u_act[idx, t, None]).sum(axis=1), n_actions - 1)
        crow = cum_trans[cur, a]
        j = np.minimum((crow <= u_env[idx, t, None]).sum(axis=1), width - 1)
        nxt = succ[cur, a, j]
        actions[idx, t] = a
        states[idx, t + 1] = nxt
        s[idx] = nxt
        alive[idx] = nxt != goal
    return states, actions


def rollout(cum_policy, obs_map, succ, cum_trans, start, goal, horizon, u_act, u_env, use_numba=None):
    """Roll out ``len(u_act)`` episodes of at most ``horizon`` steps.

    ``cum_policy[k-1, o]`` is the cumulative action distribution with ``k``
    decisions remaining (the last slice is reused when ``k`` exceeds its
    length, so a length-1 table is a stationary policy).  Returns padded
    ``states`` (``-1`` after termination) and ``actions``.
    """
    use_numba = USE_NUMBA if use_numba is None else use_numba
    fn = _nb_rollout if use_numba else _np_rollout
    return fn(
        np.ascontiguousarray(cum_policy, dtype=np.float64),
        np.ascontiguousarray(obs_map, dtype=np.int64),
        succ,
        cum_trans,
        int(start),
        int(goal),
        int(horizon),
        np.ascontiguousarray(u_act, dtype=np.float64),
        np.ascontiguousarray(u_env, dtype=np.float64),
    )


# -- tabular Q-learning -------------------------------------------------------------

@njit
def _nb_q_train(succ, cum_trans, obs_map, n_obs, start, goal, cap, eps, lr, gamma, u):
    U = succ.shape[1]
    Q = np.zeros((n_obs, U))
    s = start
    t = 0
    for i in range(u.shape[0]):
        o = obs_map[s]
        if u[i, 0] < eps:
            a = min(int(u[i, 1] * U), U - 1)
        else:
            a = _nb_argmax_tie(Q[o], u[i, 1])
        ns = succ[s, a, _nb_pick(cum_trans[s, a], u[i, 2])]
        if ns == goal:
            target = 0.0
        else:
            nxt = Q[obs_map[ns]]
            best = nxt[0]
            for b in range(1, U):
                if nxt[b] > best:
                    best = nxt[b]
            target = -1.0 + gamma * best
        Q[o, a] += lr * (target - Q[o, a])
        s = ns
        t += 1
        if ns == goal or t >= cap:
            s = start
            t = 0
    return Q


def _py_q_train(succ, cum_trans, obs_map, n_obs, start, goal, cap, eps, lr, gamma, u):
    U = succ.shape[1]
    Q = np.zeros((n_obs, U))
    s = start
    t = 0
    for i in range(u.shape[0]):
        o = obs_map[s]
        if u[i, 0] < eps:
            a = min(int(u[i, 1] * U), U - 1)
        else:
            a = _py_argmax_tie(Q[o], u[i, 1])
        ns = int(succ[s, a, _py_pick(cum_trans[s, a], u[i, 2])])
        target = 0.0 if ns == goal else -1.0 + gamma * Q[obs_map[ns]].max()
        Q[o, a] += lr * (target - Q[o, a])
        s = ns
        t += 1
        if ns == goal or t >= cap:
            s = start
            t = 0
    return Q


def q_train(succ, cum_trans, obs_map, n_obs, start, goal, cap, eps, lr, gamma, u, use_numba=None):
    """One-step Q-learning for ``len(u)`` transitions; reward -1, 0 on entering the goal.

    ``u[i]`` holds three uniforms: explore-or-exploit, action (random pick or
    tie-break), environment draw.
    """
    use_numba = USE_NUMBA if use_numba is None else use_numba
    if start == goal:
        return np.zeros((n_obs, succ.shape[1]))
    fn = _nb_q_train if use_numba else _py_q_train
    return fn(
        succ, cum_trans, np.ascontiguousarray(obs_map, dtype=np.int64), int(n_obs), int(start), int(goal),
        int(cap), float(eps), float(lr), float(gamma), np.ascontiguousarray(u, dtype=np.float64),
    )


# -- random exploration with Dirichlet count accumulation ---------------------------

@njit
def _nb_explore(succ, cum_trans, start, goal, cap, random_restart, u, counts):
    S = succ.shape[0]
    U = succ.shape[1]
    s = start
    t = 0
    for i in range(u.shape[0]):
        a = min(int(u[i, 0] * U), U - 1)
        ns = succ[s, a, _nb_pick(cum_trans[s, a], u[i, 1])]
        counts[ns, s, a] += 1.0
        s = ns
        t += 1
        if ns == goal or t >= cap:
            t = 0
            if random_restart:
                r = min(int(u[i, 2] * (S - 1)), S - 2)
                s = r if r < goal else r + 1
            else:
                s = start
    return counts


def _py_explore(succ, cum_trans, start, goal, cap, random_restart, u, counts):
    S, U = succ.shape[:2]
    s = start
    t = 0
    for i in range(u.shape[0]):
        a = min(int(u[i, 0] * U), U - 1)
        ns = int(succ[s, a, _py_pick(cum_trans[s, a], u[i, 1])])
        counts[ns, s, a] += 1.0
        s = ns
        t += 1
        if ns == goal or t >= cap:
            t = 0
            if random_restart:
                r = min(int(u[i, 2] * (S - 1)), S - 2)
                s = r if r < goal else r + 1
            else:
                s = start
    return counts


def explore(succ, cum_trans, start, goal, cap, random_restart, u, counts, use_numba=None):
    """Uniform-random-action walk adding one count per transition (in place).

    Episodes end at the goal or after ``cap`` steps; the next one starts at
    ``start`` or, with ``random_restart``, at a uniformly drawn non-goal state.
    """
    use_numba = USE_NUMBA if use_numba is None else use_numba
    fn = _nb_explore if use_numba else _py_explore
    return fn(
        succ, cum_trans, int(start), int(goal), int(cap), bool(random_restart),
        np.ascontiguousarray(u, dtype=np.float64), counts,
    )
