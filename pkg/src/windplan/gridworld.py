"""Windy grid-world: geometry, ground-truth models and simulation.

Grid cells carry 1-based *state numbers* laid out row-major, so state 11 is
(down=2, side=1) on the default 7x10 grid.  Tensors and the planners use the
0-based index ``state - 1``.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass
from enum import Enum, IntEnum
from functools import cached_property

import numpy as np

from . import kernels
from .genmodel import LikelihoodModel, ModelError, check_transition_tensor


class Stochasticity(str, Enum):
    DETERMINISTIC = "deterministic"
    MEDIUM = "medium"
    HIGH = "high"


# (wind offset, probability) for windy columns
WIND_MIX = {
    Stochasticity.DETERMINISTIC: ((0, 1.0),),
    Stochasticity.MEDIUM: ((-1, 0.15), (0, 0.70), (1, 0.15)),
    Stochasticity.HIGH: ((-1, 0.30), (0, 0.40), (1, 0.30)),
}


class Action(IntEnum):
    N = 0
    S = 1
    E = 2
    W = 3
    NW = 4
    SW = 5
    SE = 6
    NE = 7


# (d_down, d_side); "down" grows southwards
MOVES = {
    Action.N: (-1, 0),
    Action.S: (1, 0),
    Action.E: (0, 1),
    Action.W: (0, -1),
    Action.NW: (-1, -1),
    Action.SW: (1, -1),
    Action.SE: (1, 1),
    Action.NE: (-1, 1),
}

N_ACTIONS = len(Action)
CLASSIC_WIND = (0, 0, 0, 1, 1, 1, 2, 2, 1, 0)


@dataclass(frozen=True)
class GridGeometry:
    rows: int = 7
    cols: int = 10
    start: int = 31
    goal: int = 38
    wind_profile: tuple[int, ...] = CLASSIC_WIND
    stochasticity: Stochasticity = Stochasticity.DETERMINISTIC

    def __post_init__(self):
        object.__setattr__(self, "wind_profile", tuple(int(w) for w in self.wind_profile))
        object.__setattr__(self, "stochasticity", Stochasticity(self.stochasticity))
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if len(self.wind_profile) != self.cols:
            raise ValueError(f"wind_profile needs {self.cols} entries, got {len(self.wind_profile)}")
        if any(w < 0 or w >= self.rows for w in self.wind_profile):
            raise ValueError("wind amplitudes must lie in 0..rows-1")
        for name in ("start", "goal"):
            v = getattr(self, name)
            if not 1 <= v <= self.n_states:
                raise ValueError(f"{name}={v} outside 1..{self.n_states}")
        if self.start == self.goal:
            raise ValueError("start and goal must differ")

    @property
    def n_states(self) -> int:
        return self.rows * self.cols

    @property
    def start_index(self) -> int:
        return self.start - 1

    @property
    def goal_index(self) -> int:
        return self.goal - 1

    def with_stochasticity(self, stochasticity) -> "GridGeometry":
        d = asdict(self)
        d["stochasticity"] = Stochasticity(stochasticity)
        return GridGeometry(**d)

    def to_json(self) -> str:
        d = asdict(self)
        d["wind_profile"] = list(self.wind_profile)
        d["stochasticity"] = self.stochasticity.value
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str | dict) -> "GridGeometry":
        d = json.loads(text) if isinstance(text, str) else dict(text)
        unknown = set(d) - {"rows", "cols", "start", "goal", "wind_profile", "stochasticity"}
        if unknown:
            raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
        return cls(**d)


DEFAULT_GEOMETRY = GridGeometry()


def _check_state(s: int, geometry: GridGeometry) -> None:
    if not 1 <= s <= geometry.n_states:
        raise ValueError(f"state {s} outside 1..{geometry.n_states}")


def state_to_coords(s: int, geometry: GridGeometry = DEFAULT_GEOMETRY) -> tuple[int, int]:
    """1-based state number -> (down, side) coordinates."""
    _check_state(s, geometry)
    return (s - 1) // geometry.cols + 1, (s - 1) % geometry.cols + 1


def coords_to_state(down: int, side: int, geometry: GridGeometry = DEFAULT_GEOMETRY) -> int:
    if not (1 <= down <= geometry.rows and 1 <= side <= geometry.cols):
        raise ValueError(f"coordinates ({down}, {side}) off the grid")
    return (down - 1) * geometry.cols + side


def observe(s: int, geometry: GridGeometry = DEFAULT_GEOMETRY) -> tuple[int, int]:
    """Outcome pair (down + side, down * side) emitted by state ``s``."""
    down, side = state_to_coords(s, geometry)
    return down + side, down * side


def apply_wind_and_move(s: int, a: int, wind_shift: int, geometry: GridGeometry = DEFAULT_GEOMETRY) -> int:
    """King's move from ``s`` followed by an upward push of ``wind_shift`` rows, clipped to the grid."""
    if wind_shift < 0:
        raise ValueError("wind_shift must be >= 0")
    down, side = state_to_coords(s, geometry)
    dd, ds = MOVES[Action(a)]
    down = min(max(down + dd - wind_shift, 1), geometry.rows)
    side = min(max(side + ds, 1), geometry.cols)
    return coords_to_state(down, side, geometry)


def build_transition_tensor(geometry: GridGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Ground-truth ``B[next, prev, action]``; wind is read from the origin column."""
    n = geometry.n_states
    B = np.zeros((n, n, N_ACTIONS))
    mix = WIND_MIX[geometry.stochasticity]
    for s in range(1, n + 1):
        base = geometry.wind_profile[state_to_coords(s, geometry)[1] - 1]
        outcomes = mix if base > 0 else ((0, 1.0),)
        for a in Action:
            for offset, p in outcomes:
                nxt = apply_wind_and_move(s, a, max(base + offset, 0), geometry)
                B[nxt - 1, s - 1, a] += p
    return B


def build_likelihood_tensor(geometry: GridGeometry = DEFAULT_GEOMETRY) -> LikelihoodModel:
    """Deterministic two-modality outcome model (coordinate sum, coordinate product)."""
    pairs = [observe(s, geometry) for s in range(1, geometry.n_states + 1)]
    modalities, alphabets = [], []
    for m in range(2):
        values = np.array(sorted({p[m] for p in pairs}))
        A = np.zeros((values.size, geometry.n_states))
        for i, p in enumerate(pairs):
            A[np.searchsorted(values, p[m]), i] = 1.0
        modalities.append(A)
        alphabets.append(values)
    return LikelihoodModel(tuple(modalities), tuple(alphabets))


def step(s: int, a: int, tensor: np.ndarray, rng: np.random.Generator) -> int:
    """Sample the successor index of state index ``s`` under action ``a``."""
    col = tensor[:, s, a]
    if np.any(col < 0) or abs(col.sum() - 1.0) > 1e-9:
        raise ModelError(f"transition column (s={s}, a={a}) is not a distribution")
    support = np.flatnonzero(col > 0)
    cum = np.cumsum(col[support])
    return int(support[min(int(np.searchsorted(cum, rng.random(), side="right")), support.size - 1)])


def min_steps_to_goal(tensor: np.ndarray, start: int, goal: int) -> int | None:
    """Fewest moves after which the goal has positive probability (BFS on the support)."""
    if start == goal:
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    support = tensor > 0
    while frontier:
        s, d = frontier.popleft()
        for nxt in np.flatnonzero(support[:, s, :].any(axis=1)):
            nxt = int(nxt)
            if nxt == goal:
                return d + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, d + 1))
    return None


@dataclass(frozen=True)
class Environment:
    """The true world an agent acts in.

    ``obs_map`` sends a state index to the symbol a tabular learner keys on:
    the state itself under full observability, the joint outcome index under
    partial observability.
    """

    transitions: np.ndarray
    start: int
    goal: int
    likelihood: LikelihoodModel | None = None

    def __post_init__(self):
        check_transition_tensor(self.transitions)

    @cached_property
    def compact(self) -> tuple[np.ndarray, np.ndarray]:
        return kernels.compact(self.transitions)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[2]

    @cached_property
    def obs_map(self) -> np.ndarray:
        if self.likelihood is None:
            return np.arange(self.n_states)
        return np.argmax(self.likelihood.joint, axis=0)

    @property
    def n_obs(self) -> int:
        return self.n_states if self.likelihood is None else self.likelihood.joint.shape[0]

    def observe(self, s: int, rng: np.random.Generator | None = None) -> tuple[int, ...]:
        """Outcome emitted by state index ``s`` (sampled if the likelihood is not a point mass)."""
        if self.likelihood is None:
            return (s,)
        col = self.likelihood.joint[:, s]
        if rng is None or np.count_nonzero(col) == 1:
            o = int(np.argmax(col))
        else:
            o = int(rng.choice(col.size, p=col))
        return self.likelihood.joint_alphabet[o]


def make_environment(geometry: GridGeometry = DEFAULT_GEOMETRY, partial: bool = False) -> Environment:
    return Environment(
        build_transition_tensor(geometry),
        geometry.start_index,
        geometry.goal_index,
        build_likelihood_tensor(geometry) if partial else None,
    )
