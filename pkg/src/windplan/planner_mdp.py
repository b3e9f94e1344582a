"""Recursive expected-free-energy planning under full observability.

Horizon convention: an episode of horizon ``T`` allows ``T`` moves, taken at
decision times ``tau = 1..T``.  At the last decision (``tau == T``) the
expected free energy of an action is the KL divergence between the predicted
next-state distribution and the preferences; earlier decisions add the
expectation of the next decision's free energy under the predicted state and
the softmax action distribution there.

Because G only depends on the state and the number of decisions left, the
whole recursion is one backward sweep producing an ``[T, S, U]`` table.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .genmodel import GenerativeModel, ModelError, expected_kl, softmax
from .gridworld import Environment


@dataclass(frozen=True)
class EpisodeResult:
    trajectory: tuple[int, ...]
    actions: tuple[int, ...]
    reached_goal: bool
    steps_used: int


@dataclass(frozen=True)
class RolloutBatch:
    """Padded trajectories of many episodes (``-1`` after termination)."""

    states: np.ndarray
    actions: np.ndarray
    goal: int

    @property
    def steps_used(self) -> np.ndarray:
        return (self.actions >= 0).sum(axis=1)

    @property
    def reached(self) -> np.ndarray:
        return (self.states == self.goal).any(axis=1)

    @property
    def success_rate(self) -> float:
        return float(self.reached.mean()) if len(self.states) else 0.0

    def __len__(self) -> int:
        return self.states.shape[0]

    def episode(self, i: int) -> EpisodeResult:
        n = int(self.steps_used[i])
        return EpisodeResult(
            tuple(int(s) for s in self.states[i, : n + 1]),
            tuple(int(a) for a in self.actions[i, :n]),
            bool(self.reached[i]),
            n,
        )


@dataclass(frozen=True)
class EfeTable:
    """Memo of G for every (decisions left, state, action).

    G with ``k`` decisions left does not depend on the episode horizon, so a
    table built for horizon ``H`` serves every ``T <= H``.
    """

    g: np.ndarray
    policy: np.ndarray

    @property
    def horizon(self) -> int:
        return self.g.shape[0]

    @property
    def entries(self) -> int:
        return self.g.size

    def _slot(self, tau: int, T: int) -> int:
        if not 1 <= tau <= T:
            raise ValueError(f"tau={tau} outside 1..{T}")
        if T > self.horizon:
            raise ValueError(f"table covers horizons up to {self.horizon}, not {T}")
        return T - tau

    def values(self, s: int, tau: int, T: int) -> np.ndarray:
        return self.g[self._slot(tau, T), s]

    def distribution(self, s: int, tau: int, T: int) -> np.ndarray:
        return self.policy[self._slot(tau, T), s]


def build_efe_table(model: GenerativeModel, T: int, use_numba: bool | None = None) -> EfeTable:
    if T < 1:
        raise ValueError("horizon must be >= 1")
    kl = expected_kl(model.transitions, model.preferences)
    g = kernels.efe_backward(model.transitions, kl, T, use_numba=use_numba)
    return EfeTable(g, softmax(-g, axis=-1))


def efe(s: int, a: int, tau: int, T: int, model: GenerativeModel, table: EfeTable | None = None) -> float:
    table = table if table is not None else build_efe_table(model, T)
    return float(table.values(s, tau, T)[a])


def action_distribution(
    s: int, tau: int, T: int, model: GenerativeModel, table: EfeTable | None = None
) -> np.ndarray:
    """softmax(-G) over all actions at unit temperature."""
    table = table if table is not None else build_efe_table(model, T)
    return table.distribution(s, tau, T).copy()


def sample_action(dist: np.ndarray, rng: np.random.Generator) -> int:
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
        raise ModelError("action distribution is not normalised")
    support = np.flatnonzero(dist > 0)
    cum = np.cumsum(dist[support])
    return int(support[min(int(np.searchsorted(cum, rng.random(), side="right")), support.size - 1)])


def run_episodes(
    model: GenerativeModel,
    env: Environment,
    T: int,
    n: int,
    rng: np.random.Generator,
    table: EfeTable | None = None,
    use_numba: bool | None = None,
) -> RolloutBatch:
    """``n`` episodes acting on the true environment with the model's plan."""
    if model.transitions.shape != env.transitions.shape:
        raise ValueError("model and environment tensors differ in shape")
    table = table if table is not None else build_efe_table(model, T, use_numba=use_numba)
    if table.horizon < T:
        raise ValueError(f"table covers horizons up to {table.horizon}, not {T}")
    succ, cum = env.compact
    u_act = rng.random((n, T))
    u_env = rng.random((n, T))
    states, actions = kernels.rollout(
        kernels.cumulative_policy(table.policy[:T]), env.obs_map, succ, cum, env.start, env.goal, T,
        u_act, u_env, use_numba=use_numba,
    )
    return RolloutBatch(states, actions, env.goal)


def run_episode(
    model: GenerativeModel,
    env: Environment,
    T: int,
    rng: np.random.Generator,
    table: EfeTable | None = None,
) -> EpisodeResult:
    return run_episodes(model, env, T, 1, rng, table=table).episode(0)
