"""Tabular Q-learning baseline (epsilon-greedy behaviour, greedy evaluation)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .genmodel import tensor_from_json, tensor_to_json
from .gridworld import Environment
from .planner_mdp import EpisodeResult, RolloutBatch


@dataclass
class QTable:
    values: np.ndarray  # [observation, action]
    epsilon: float = 0.1
    lr: float = 0.5
    gamma: float = 1.0
    steps: int = 0

    def greedy_policy(self, eps_eval: float = 0.0) -> np.ndarray:
        """Stationary policy: uniform over maximal actions, mixed with ``eps_eval`` random moves."""
        best = self.values == self.values.max(axis=1, keepdims=True)
        greedy = best / best.sum(axis=1, keepdims=True)
        n_actions = self.values.shape[1]
        return (1.0 - eps_eval) * greedy + eps_eval / n_actions

    def to_json(self) -> dict:
        return tensor_to_json(self.values, epsilon=self.epsilon, lr=self.lr, gamma=self.gamma, steps=self.steps)

    @classmethod
    def from_json(cls, doc: dict) -> "QTable":
        return cls(tensor_from_json(doc), doc.get("epsilon", 0.1), doc.get("lr", 0.5), doc.get("gamma", 1.0),
                   int(doc.get("steps", 0)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))


def train(
    env: Environment,
    steps: int,
    rng: np.random.Generator | int,
    cap: int | None = None,
    epsilon: float = 0.1,
    lr: float = 0.5,
    gamma: float = 1.0,
    use_numba: bool | None = None,
) -> QTable:
    """Run exactly ``steps`` Q-learning transitions.

    Reward is -1 per move and 0 for the move that enters the goal, which is
    terminal.  Episodes also reset after ``cap`` moves (truncation, so the
    last update still bootstraps).  The learner keys on ``env.obs_map``.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rng = np.random.default_rng(rng)
    succ, cum = env.compact
    u = rng.random((steps, 3))
    q = kernels.q_train(
        succ, cum, env.obs_map, env.n_obs, env.start, env.goal, cap if cap else steps + 1,
        epsilon, lr, gamma, u, use_numba=use_numba,
    )
    return QTable(q, epsilon, lr, gamma, steps)


def evaluate(
    q: QTable,
    env: Environment,
    T: int,
    n: int,
    rng: np.random.Generator,
    eps_eval: float = 0.0,
    use_numba: bool | None = None,
) -> RolloutBatch:
    succ, cum = env.compact
    cum_policy = kernels.cumulative_policy(q.greedy_policy(eps_eval))[None]
    states, actions = kernels.rollout(
        cum_policy, env.obs_map, succ, cum, env.start, env.goal, T,
        rng.random((n, T)), rng.random((n, T)), use_numba=use_numba,
    )
    return RolloutBatch(states, actions, env.goal)


def greedy_episode(q: QTable, env: Environment, T: int, rng: np.random.Generator, eps_eval: float = 0.0) -> EpisodeResult:
    return evaluate(q, env, T, 1, rng, eps_eval).episode(0)
