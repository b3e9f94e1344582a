"""Belief-space planning for the partially observed level.

Each node of the search tree holds a belief and the number of decisions
left.  For an action the expected free energy is

    risk       KL[Q(o | a, b) || C(o)]
  + ambiguity  E_{Q(s' | a, b)} H[P(o | s')]
  + future     E_{Q(o | a, b)} E_{Q(a' | b'_o)} G(a' | b'_o)

where ``b'_o`` is the exact Bayesian posterior after outcome ``o``.  Occam's
window trims the tree: outcome branches whose predictive probability is not
above ``outcome_threshold`` are dropped (the survivors renormalised), and below
the root only actions whose prior -- softmax of their one-step risk plus
ambiguity -- is above ``action_threshold`` are expanded and averaged over.  The
root always scores every action.

Nodes are memoised on (rounded belief, decisions left), so the tree is really
a DAG shared across decision steps, episodes and horizons of one planner.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .genmodel import GenerativeModel, LikelihoodModel, ModelError, check_distribution, entropy, softmax
from .gridworld import Environment, step
from .planner_mdp import EpisodeResult, sample_action

BELIEF_DECIMALS = 12


class InferenceError(RuntimeError):
    """An observation the agent's model deems impossible."""


@dataclass(frozen=True)
class PruningConfig:
    outcome_threshold: float = 1 / 16
    action_threshold: float = 1 / 16

    def __post_init__(self):
        for name in ("outcome_threshold", "action_threshold"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must lie in [0, 1)")


NO_PRUNING = PruningConfig(0.0, 0.0)


@dataclass
class BeliefNode:
    belief: np.ndarray
    depth: int  # decisions left
    immediate: np.ndarray  # risk + ambiguity per action
    g_values: np.ndarray  # full G; NaN for actions never expanded
    predicted: np.ndarray = field(repr=False)  # [state, action]
    outcome_probs: np.ndarray = field(repr=False)  # [outcome, action]
    children: dict = field(default_factory=dict)  # (action, outcome index) -> BeliefNode


def belief_predict(b: np.ndarray, a: int, B: np.ndarray) -> np.ndarray:
    pred = B[:, :, a] @ b
    return pred / pred.sum()


def belief_update(b_pred: np.ndarray, o, A: LikelihoodModel) -> np.ndarray:
    """Posterior over states after the outcome pair ``o``."""
    post = b_pred * A.column(o)
    z = post.sum()
    if z <= 0:
        raise InferenceError(f"outcome {tuple(o)} has zero probability under the predicted belief")
    return post / z


def point_belief(s: int, n: int) -> np.ndarray:
    b = np.zeros(n)
    b[s] = 1.0
    return b


class BeliefPlanner:
    """Sophisticated (recursive) planner over beliefs with Occam's-window pruning."""

    def __init__(self, model: GenerativeModel, pruning: PruningConfig = PruningConfig()):
        if model.likelihood is None:
            raise ModelError("belief planning needs a likelihood model")
        self.model = model
        self.pruning = pruning
        self._joint = model.likelihood.joint
        self._amb = entropy(self._joint, axis=0)
        self._log_c = np.log(model.preferences)
        self._nodes: dict[tuple[int, bytes], BeliefNode] = {}

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    def clear(self) -> None:
        self._nodes.clear()

    def _key(self, b: np.ndarray, depth: int) -> tuple[int, bytes]:
        return depth, np.round(b, BELIEF_DECIMALS).tobytes()

    def _predict_all(self, b: np.ndarray) -> np.ndarray:
        pred = np.einsum("pqa,q->pa", self.model.transitions, b)
        return pred / pred.sum(axis=0, keepdims=True)

    def node(self, b: np.ndarray, depth: int) -> BeliefNode:
        key = self._key(b, depth)
        nd = self._nodes.get(key)
        if nd is None:
            pred = self._predict_all(b)
            q_o = self._joint @ pred
            safe = np.where(q_o > 0, q_o, 1.0)
            risk = np.sum(q_o * (np.log(safe) - self._log_c[:, None]), axis=0)
            ambiguity = self._amb @ pred
            immediate = risk + ambiguity
            nd = BeliefNode(b, depth, immediate, np.full(immediate.shape, np.nan), pred, q_o)
            self._nodes[key] = nd
        return nd

    def _expand(self, nd: BeliefNode, a: int) -> float:
        if not np.isnan(nd.g_values[a]):
            return nd.g_values[a]
        g = nd.immediate[a]
        if nd.depth > 1:
            q_o = nd.outcome_probs[:, a]
            keep = np.flatnonzero(q_o > self.pruning.outcome_threshold)
            if keep.size == 0:
                keep = np.array([int(np.argmax(q_o))])
            weights = q_o[keep] / q_o[keep].sum()
            future = 0.0
            for o, w in zip(keep, weights):
                post = nd.predicted[:, a] * self._joint[o]
                child = self.node(post / post.sum(), nd.depth - 1)
                nd.children[(a, int(o))] = child
                future += w * self._value(child)
            g = g + future
        nd.g_values[a] = g
        return g

    def _value(self, nd: BeliefNode) -> float:
        """Expected G at a non-root node under its pruned softmax action distribution."""
        prior = softmax(-nd.immediate)
        live = np.flatnonzero(prior > self.pruning.action_threshold)
        if live.size == 0:
            live = np.array([int(np.argmax(prior))])
        g = np.array([self._expand(nd, int(a)) for a in live])
        return float(softmax(-g) @ g)

    def efe(self, b: np.ndarray, a: int, depth: int) -> float:
        if depth < 1:
            raise ValueError("at least one decision must be left")
        return float(self._expand(self.node(b, depth), a))

    def g_values(self, b: np.ndarray, depth: int) -> np.ndarray:
        if depth < 1:
            raise ValueError("at least one decision must be left")
        nd = self.node(b, depth)
        return np.array([self._expand(nd, a) for a in range(self.model.n_actions)])

    def action_probabilities(self, b: np.ndarray, depth: int) -> np.ndarray:
        return softmax(-self.g_values(b, depth))


def _depth(tau: int, T: int) -> int:
    if not 1 <= tau <= T:
        raise ValueError(f"tau={tau} outside 1..{T}")
    return T - tau + 1


def efe_belief(b, a, tau, T, model, pruning: PruningConfig = PruningConfig(), planner=None) -> float:
    planner = planner or BeliefPlanner(model, pruning)
    return planner.efe(np.asarray(b, dtype=float), a, _depth(tau, T))


def action_probabilities(b, tau, T, model, pruning: PruningConfig = PruningConfig(), planner=None) -> np.ndarray:
    planner = planner or BeliefPlanner(model, pruning)
    return planner.action_probabilities(np.asarray(b, dtype=float), _depth(tau, T))


def run_episode_pomdp(
    model: GenerativeModel,
    env: Environment,
    T: int,
    rng: np.random.Generator,
    pruning: PruningConfig = PruningConfig(),
    planner: BeliefPlanner | None = None,
    initial_belief: np.ndarray | None = None,
    trace: IO[str] | None = None,
    topk: int = 3,
) -> EpisodeResult:
    """Plan, act, observe, filter until the goal is reached or ``T`` moves are spent.

    ``trace`` receives one JSON object per decision.
    """
    if env.likelihood is None or model.likelihood is None:
        raise ModelError("partial observability needs likelihoods on both model and environment")
    planner = planner or BeliefPlanner(model, pruning)
    b = point_belief(env.start, env.n_states) if initial_belief is None else np.asarray(initial_belief, float)
    check_distribution(b, what="initial belief")
    s = env.start
    trajectory, actions = [s], []
    for t in range(T):
        if s == env.goal:
            break
        probs = planner.action_probabilities(b, T - t)
        a = sample_action(probs, rng)
        s = step(s, a, env.transitions, rng)
        o = env.observe(s, rng)
        b = belief_update(belief_predict(b, a, model.transitions), o, model.likelihood)
        trajectory.append(s)
        actions.append(a)
        if trace is not None:
            top = np.argsort(-b, kind="stable")[:topk]
            trace.write(json.dumps({
                "tau": t + 1,
                "belief_topk": [[int(i), float(b[i])] for i in top if b[i] > 0],
                "chosen_action": a,
                "action_probs": [float(p) for p in probs],
                "observed": list(o),
            }) + "\n")
    return EpisodeResult(tuple(trajectory), tuple(actions), s == env.goal, len(actions))
