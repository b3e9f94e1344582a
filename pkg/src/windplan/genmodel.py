"""Generative-model objects shared by both planners.

Arrays follow one layout throughout the package:

* transition tensors ``B[next_state, prev_state, action]``
* likelihood tensors ``A[outcome, state]`` (one per modality)
* beliefs and preferences are dense 1-d probability vectors

States and actions are 0-based array indices here; the 1-based grid labels
live in :mod:`windplan.gridworld`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

NORM_TOL = 1e-10
# Smallest smoothing that keeps every log finite: the goal preference is a point mass up to rounding.
DEFAULT_EPSILON = 1e-16


class ModelError(ValueError):
    """Raised for malformed probability objects (zero columns, bad shapes...)."""


def check_distribution(p: np.ndarray, axis: int = 0, tol: float = 1e-9, what: str = "distribution") -> None:
    if np.any(p < 0):
        raise ModelError(f"{what} has negative entries")
    sums = p.sum(axis=axis)
    if not np.allclose(sums, 1.0, atol=tol, rtol=0):
        raise ModelError(f"{what} is not normalised (max |sum-1| = {np.abs(sums - 1).max():.3g})")


def check_transition_tensor(B: np.ndarray, tol: float = 1e-9) -> None:
    if B.ndim != 3 or B.shape[0] != B.shape[1]:
        raise ModelError(f"transition tensor must be [S, S, U], got {B.shape}")
    check_distribution(B, axis=0, tol=tol, what="transition tensor")


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = -np.max(x, axis=axis, keepdims=True) + x
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def make_preferences(goal: int, epsilon: float, n: int) -> np.ndarray:
    """Goal-seeking preference vector: 1 at ``goal``, ``epsilon`` elsewhere, normalised.

    The smoothing keeps every entry strictly positive so that KL divergences
    against it stay finite.
    """
    if not 0 <= goal < n:
        raise ModelError(f"goal index {goal} outside 0..{n - 1}")
    if not epsilon > 0:
        raise ModelError("epsilon must be > 0; a zero entry makes the KL term infinite")
    if epsilon >= 1.0 / n:
        raise ModelError(f"epsilon must be below 1/n = {1.0 / n:.4g}")
    c = np.full(n, float(epsilon))
    c[goal] = 1.0
    return c / c.sum()


def kl_divergence(q: np.ndarray, c: np.ndarray) -> float:
    """KL[q || c] with the convention 0 * log 0 = 0."""
    q = np.asarray(q, dtype=float)
    c = np.asarray(c, dtype=float)
    if q.shape != c.shape:
        raise ModelError(f"shape mismatch {q.shape} vs {c.shape}")
    support = q > 0
    if np.any(c[support] <= 0):
        raise ModelError("preference has zero mass where q does not")
    qs = q[support]
    return float(np.sum(qs * (np.log(qs) - np.log(c[support]))))


def expected_kl(B: np.ndarray, c: np.ndarray) -> np.ndarray:
    """KL[B[:, s, a] || c] for every column, as an ``[S, U]`` table."""
    if np.any(c <= 0):
        raise ModelError("preferences must be strictly positive")
    safe = np.where(B > 0, B, 1.0)
    neg_entropy = np.sum(B * np.log(safe), axis=0)
    cross = np.einsum("pqa,p->qa", B, np.log(c))
    return neg_entropy - cross


def entropy(p: np.ndarray, axis: int = 0) -> np.ndarray:
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(p * np.log(safe), axis=axis)


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Turn Dirichlet concentration parameters into a transition tensor."""
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ModelError("counts must be non-negative")
    sums = counts.sum(axis=0, keepdims=True)
    if np.any(sums <= 0):
        raise ModelError("zero count column cannot be normalised")
    return counts / sums


def goal_absorbing(B: np.ndarray, goal: int) -> np.ndarray:
    """Copy of ``B`` in which every action taken at ``goal`` stays at ``goal``."""
    out = np.array(B, dtype=float, copy=True)
    out[:, goal, :] = 0.0
    out[goal, goal, :] = 1.0
    return out


@dataclass(frozen=True)
class LikelihoodModel:
    """Outcome model: one ``[outcome, state]`` tensor per modality.

    ``alphabets[m][i]`` is the outcome value encoded by row ``i`` of modality
    ``m``. Modalities are conditionally independent given the state, so the
    joint outcome tensor is their row-wise product restricted to pairs that
    some state can emit.
    """

    modalities: tuple[np.ndarray, ...]
    alphabets: tuple[np.ndarray, ...]
    joint: np.ndarray = field(init=False, repr=False)
    joint_alphabet: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.modalities) != len(self.alphabets):
            raise ModelError("one alphabet per modality")
        n_states = self.modalities[0].shape[1]
        for A, alpha in zip(self.modalities, self.alphabets):
            if A.shape != (len(alpha), n_states):
                raise ModelError(f"modality shape {A.shape} does not match alphabet/state count")
            check_distribution(A, axis=0, what="likelihood")
        joint = np.ones((1, n_states))
        labels: list[tuple[int, ...]] = [()]
        for A, alpha in zip(self.modalities, self.alphabets):
            joint = (joint[:, None, :] * A[None, :, :]).reshape(-1, n_states)
            labels = [lab + (int(v),) for lab in labels for v in alpha]
        keep = joint.sum(axis=1) > 0
        object.__setattr__(self, "joint", joint[keep])
        object.__setattr__(self, "joint_alphabet", tuple(lab for lab, k in zip(labels, keep) if k))

    @property
    def n_states(self) -> int:
        return self.modalities[0].shape[1]

    def outcome_index(self, modality: int, value: int) -> int:
        hits = np.flatnonzero(self.alphabets[modality] == value)
        if hits.size == 0:
            raise ModelError(f"value {value} not in alphabet of modality {modality}")
        return int(hits[0])

    def joint_index(self, pair: Sequence[int]) -> int:
        try:
            return self.joint_alphabet.index(tuple(int(v) for v in pair))
        except ValueError:
            raise ModelError(f"outcome {tuple(pair)} cannot be emitted by any state") from None

    def column(self, pair: Sequence[int]) -> np.ndarray:
        """P(pair | s) for every state, as the product of modality rows."""
        lik = np.ones(self.n_states)
        for m, value in enumerate(pair):
            lik = lik * self.modalities[m][self.outcome_index(m, value)]
        return lik

    def preimage(self, pair: Sequence[int]) -> np.ndarray:
        return np.flatnonzero(self.column(pair) > 0)


@dataclass(frozen=True)
class GenerativeModel:
    """What the agent plans with.

    ``preferences`` lives over states when ``likelihood`` is ``None`` and over
    the joint outcome alphabet otherwise.
    """

    transitions: np.ndarray
    preferences: np.ndarray
    likelihood: LikelihoodModel | None = None

    def __post_init__(self):
        check_transition_tensor(self.transitions)
        n_pref = self.n_states if self.likelihood is None else self.likelihood.joint.shape[0]
        if self.preferences.shape != (n_pref,):
            raise ModelError(f"preferences must have length {n_pref}")
        check_distribution(self.preferences, what="preferences")
        if np.any(self.preferences <= 0):
            raise ModelError("preferences must be strictly positive")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[2]


def mdp_model(B: np.ndarray, goal: int, epsilon: float = DEFAULT_EPSILON, absorbing: bool = True) -> GenerativeModel:
    n = B.shape[1]
    planning = goal_absorbing(B, goal) if absorbing else np.asarray(B, dtype=float)
    return GenerativeModel(planning, make_preferences(goal, epsilon, n))


def pomdp_model(
    B: np.ndarray,
    likelihood: LikelihoodModel,
    goal: int,
    epsilon: float = DEFAULT_EPSILON,
    absorbing: bool = True,
) -> GenerativeModel:
    """Preferences target the joint outcome the goal state emits."""
    joint = likelihood.joint
    goal_outcome = int(np.argmax(joint[:, goal]))
    planning = goal_absorbing(B, goal) if absorbing else np.asarray(B, dtype=float)
    return GenerativeModel(planning, make_preferences(goal_outcome, epsilon, joint.shape[0]), likelihood)


# -- JSON layout shared by tensors, counts and Q-tables -----------------------

def tensor_to_json(arr: np.ndarray, **header) -> dict:
    arr = np.asarray(arr)
    doc = dict(header)
    doc["shape"] = list(arr.shape)
    doc["data"] = arr.ravel(order="C").tolist()
    return doc


def tensor_from_json(doc: dict) -> np.ndarray:
    try:
        shape = tuple(int(n) for n in doc["shape"])
        data = np.asarray(doc["data"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ModelError(f"not a tensor document: {exc}") from None
    if data.size != int(np.prod(shape)):
        raise ModelError(f"data length {data.size} does not match shape {shape}")
    return data.reshape(shape)


def save_tensor(path: str | Path, arr: np.ndarray, **header) -> None:
    Path(path).write_text(json.dumps(tensor_to_json(arr, **header)))


def load_tensor(path: str | Path) -> np.ndarray:
    return tensor_from_json(json.loads(Path(path).read_text()))
