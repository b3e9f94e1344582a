"""Dirichlet learning of the transition tensor from random exploration."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .genmodel import ModelError, normalize_counts, tensor_from_json, tensor_to_json
from .gridworld import Environment

# One pseudo-observation per column, spread uniformly over the 70 successors.
DEFAULT_ALPHA = 1.0 / 70


@dataclass
class DirichletCounts:
    """Concentration parameters ``counts[next, prev, action]`` (all >= ``alpha``)."""

    counts: np.ndarray
    alpha: float
    steps: int = 0

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, alpha: float = DEFAULT_ALPHA) -> "DirichletCounts":
        if not alpha > 0:
            raise ModelError("alpha must be > 0")
        return cls(np.full((n_states, n_states, n_actions), float(alpha)), float(alpha))

    def tensor(self) -> np.ndarray:
        return normalize_counts(self.counts)

    def to_json(self) -> dict:
        return tensor_to_json(self.counts, alpha=self.alpha, steps=self.steps)

    @classmethod
    def from_json(cls, doc: dict) -> "DirichletCounts":
        if "alpha" not in doc or "steps" not in doc:
            raise ModelError("counts document needs 'alpha' and 'steps'")
        return cls(tensor_from_json(doc), float(doc["alpha"]), int(doc["steps"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "DirichletCounts":
        return cls.from_json(json.loads(Path(path).read_text()))


def update_counts(counts: DirichletCounts, s_prev: int, a: int, s_next: int, weight: float = 1.0) -> DirichletCounts:
    """Add ``weight`` to the (s_next, s_prev, a) cell in place and return ``counts``.

    This is the outer product of one-hot state vectors scaled by the
    probability of the action taken; for an executed action that weight is 1.
    """
    if not weight > 0:
        raise ModelError("weight must be > 0")
    counts.counts[s_next, s_prev, a] += weight
    counts.steps += 1
    return counts


def explore_random(
    env: Environment,
    steps: int,
    rng: np.random.Generator,
    alpha: float = DEFAULT_ALPHA,
    cap: int | None = None,
    restart: str = "random",
    use_numba: bool | None = None,
) -> DirichletCounts:
    """Learn counts from ``steps`` uniformly random actions in ``env``.

    Exploration episodes end at the goal or after ``cap`` moves; the next
    one starts from a uniformly drawn non-goal state (``restart="random"``)
    or from the start state (``restart="start"``).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if restart not in ("random", "start"):
        raise ValueError("restart must be 'random' or 'start'")
    out = DirichletCounts.uniform(env.n_states, env.n_actions, alpha)
    if steps == 0:
        return out
    succ, cum = env.compact
    u = rng.random((steps, 3))
    kernels.explore(
        succ, cum, env.start, env.goal, cap if cap else steps + 1, restart == "random", u, out.counts,
        use_numba=use_numba,
    )
    out.steps = steps
    return out


def model_accuracy(learned: np.ndarray, truth: np.ndarray) -> float:
    """Mean total-variation distance between corresponding columns (0 = identical, 1 = disjoint)."""
    if learned.shape != truth.shape:
        raise ModelError(f"shape mismatch {learned.shape} vs {truth.shape}")
    return float(0.5 * np.abs(learned - truth).sum(axis=0).mean())
