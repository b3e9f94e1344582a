"""Benchmark orchestration: level models, agent rollouts, success-rate tables."""
from __future__ import annotations

import csv
import json
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import genmodel, kernels, learning, planner_mdp, planner_pomdp, qlearn
from .gridworld import DEFAULT_GEOMETRY, GridGeometry, Stochasticity, make_environment

DEFAULT_EPSILON = genmodel.DEFAULT_EPSILON
POMDP_SOFT_CAP = 12

# level -> (stochastic wind, partially observed, learned transitions)
LEVELS = {
    1: (False, False, False),
    2: (True, False, False),
    3: (False, False, True),
    4: (True, False, True),
    5: (True, True, False),
}

CSV_FIELDS = (
    "agent", "level", "stochasticity", "horizon", "seed", "trials", "successes",
    "success_rate", "mean_steps_on_success", "planning_wall_time_ms",
)


class ConfigError(ValueError):
    pass


def _steps_label(n: int) -> str:
    return f"{n // 1000}K" if n >= 1000 and n % 1000 == 0 else str(n)


@dataclass(frozen=True)
class AgentSpec:
    kind: str  # sophisticated | soph-learned-b | qlearning | random
    steps: int | None = None

    KINDS = ("sophisticated", "soph-learned-b", "qlearning", "random")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"unknown agent {self.kind!r}; choose from {', '.join(self.KINDS)}")
        needs_steps = self.kind in ("soph-learned-b", "qlearning")
        if needs_steps and (self.steps is None or self.steps < 0):
            raise ConfigError(f"agent {self.kind} needs a step count, e.g. {self.kind}:5000")
        if not needs_steps and self.steps is not None:
            raise ConfigError(f"agent {self.kind} takes no step count")

    @classmethod
    def parse(cls, text: str) -> "AgentSpec":
        kind, _, steps = text.strip().lower().partition(":")
        try:
            return cls(kind, int(steps) if steps else None)
        except ValueError as exc:
            raise ConfigError(f"bad agent spec {text!r}: {exc}") from None

    def __str__(self) -> str:
        return self.kind if self.steps is None else f"{self.kind}:{self.steps}"

    @property
    def label(self) -> str:
        if self.kind == "sophisticated":
            return "SophAgent"
        if self.kind == "soph-learned-b":
            return f"SophAgent ({_steps_label(self.steps)} B-updates)"
        if self.kind == "qlearning":
            return f"QLearning{_steps_label(self.steps)}"
        return "RandomAgent"


def parse_horizons(text: str | list | tuple) -> tuple[int, ...]:
    """``"6..20"`` (inclusive), ``"6,8,10"`` or a list of ints."""
    if isinstance(text, (list, tuple)):
        out = [int(t) for t in text]
    else:
        out = []
        for part in str(text).split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    if not out or min(out) < 1:
        raise ConfigError("horizons must be positive integers")
    return tuple(out)


@dataclass(frozen=True)
class BenchmarkConfig:
    level: int
    stochasticity: Stochasticity | None = None
    agents: tuple[AgentSpec, ...] = (AgentSpec("sophisticated"),)
    horizons: tuple[int, ...] = tuple(range(1, 21))
    trials: int = 100
    seeds: int = 10
    seed: int = 0
    geometry: GridGeometry = DEFAULT_GEOMETRY
    epsilon: float = DEFAULT_EPSILON
    alpha: float = learning.DEFAULT_ALPHA
    outcome_threshold: float = 1 / 16
    action_threshold: float = 1 / 16
    workers: int = 1
    allow_long_horizon: bool = False

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ConfigError(f"level must be 1..5, got {self.level}")
        stochastic, partial, learned = LEVELS[self.level]
        st = None if self.stochasticity is None else Stochasticity(self.stochasticity)
        if not stochastic:
            if st not in (None, Stochasticity.DETERMINISTIC):
                raise ConfigError(f"level {self.level} has deterministic wind")
            st = Stochasticity.DETERMINISTIC
        elif st in (None, Stochasticity.DETERMINISTIC):
            raise ConfigError(f"level {self.level} needs stochasticity medium or high")
        object.__setattr__(self, "stochasticity", st)
        object.__setattr__(self, "geometry", self.geometry.with_stochasticity(st))
        object.__setattr__(self, "agents", tuple(
            a if isinstance(a, AgentSpec) else AgentSpec.parse(a) for a in self.agents))
        object.__setattr__(self, "horizons", parse_horizons(self.horizons))
        if not self.agents:
            raise ConfigError("select at least one agent")
        for a in self.agents:
            if a.kind == "soph-learned-b" and not learned:
                raise ConfigError(f"{a.label} only runs on the learned-dynamics levels 3 and 4")
            if a.kind == "sophisticated" and learned:
                raise ConfigError(f"level {self.level} learns its dynamics; use soph-learned-b")
        if partial and max(self.horizons) > POMDP_SOFT_CAP and not self.allow_long_horizon:
            raise ConfigError(f"level 5 horizons above {POMDP_SOFT_CAP} need allow_long_horizon")
        if self.trials < 1 or self.seeds < 1:
            raise ConfigError("trials and seeds must be >= 1")
        if not 0 < self.epsilon < 1.0 / self.geometry.n_states:
            raise ConfigError("epsilon must lie in (0, 1/n_states)")
        if not self.alpha > 0:
            raise ConfigError("alpha must be > 0")
        try:
            planner_pomdp.PruningConfig(self.outcome_threshold, self.action_threshold)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def partial(self) -> bool:
        return LEVELS[self.level][1]

    @property
    def pruning(self) -> planner_pomdp.PruningConfig:
        return planner_pomdp.PruningConfig(self.outcome_threshold, self.action_threshold)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        d = {k.replace("-", "_"): v for k, v in d.items()}
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "agents" in d:
            d["agents"] = tuple(AgentSpec.parse(a) if isinstance(a, str) else a for a in d["agents"])
        if isinstance(d.get("geometry"), (dict, str)):
            try:
                d["geometry"] = GridGeometry.from_json(d["geometry"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad geometry: {exc}") from None
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ResultRow:
    agent: str
    level: int
    stochasticity: str
    horizon: int
    seed: int
    trials: int
    successes: int
    success_rate: float
    mean_steps_on_success: float
    planning_wall_time_ms: float


class _Context:
    """Per-process models shared by the cells of one benchmark."""

    def __init__(self, config: BenchmarkConfig):
        self.config = config
        self.env = make_environment(config.geometry, partial=config.partial)
        self._planner = None

    def mdp_model(self, B):
        return genmodel.mdp_model(B, self.env.goal, self.config.epsilon)

    @property
    def planner(self) -> planner_pomdp.BeliefPlanner:
        if self._planner is None:
            env = self.env
            model = genmodel.pomdp_model(env.transitions, env.likelihood, env.goal, self.config.epsilon)
            self._planner = planner_pomdp.BeliefPlanner(model, self.config.pruning)
        return self._planner


def cell_rng(config: BenchmarkConfig, agent: AgentSpec, horizon: int, seed_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([
        config.seed, config.level, list(Stochasticity).index(config.stochasticity),
        zlib.crc32(str(agent).encode()), horizon, seed_index,
    ])
    return np.random.default_rng(ss)


def _uniform_batch(env, T, n, rng):
    U = env.n_actions
    cum = kernels.cumulative_policy(np.full((1, env.n_obs, U), 1.0 / U))
    succ, ctrans = env.compact
    states, actions = kernels.rollout(cum, env.obs_map, succ, ctrans, env.start, env.goal, T,
                                      rng.random((n, T)), rng.random((n, T)))
    return planner_mdp.RolloutBatch(states, actions, env.goal)


def run_cell(ctx: _Context, agent: AgentSpec, T: int, seed_index: int) -> ResultRow:
    cfg, env = ctx.config, ctx.env
    rng = cell_rng(cfg, agent, T, seed_index)
    t0 = time.perf_counter()
    plan_time = 0.0
    if agent.kind == "sophisticated" and cfg.partial:
        planner = ctx.planner
        episodes = []
        for _ in range(cfg.trials):
            episodes.append(planner_pomdp.run_episode_pomdp(planner.model, env, T, rng, planner=planner))
        plan_time = time.perf_counter() - t0
        reached = np.array([e.reached_goal for e in episodes])
        steps = np.array([e.steps_used for e in episodes])
    else:
        if agent.kind == "sophisticated":
            table = planner_mdp.build_efe_table(ctx.mdp_model(env.transitions), T)
            plan_time = time.perf_counter() - t0
            batch = planner_mdp.run_episodes(ctx.mdp_model(env.transitions), env, T, cfg.trials, rng, table=table)
        elif agent.kind == "soph-learned-b":
            counts = learning.explore_random(env, agent.steps, rng, cfg.alpha, cap=T)
            model = ctx.mdp_model(counts.tensor())
            t1 = time.perf_counter()
            table = planner_mdp.build_efe_table(model, T)
            plan_time = time.perf_counter() - t1
            batch = planner_mdp.run_episodes(model, env, T, cfg.trials, rng, table=table)
        elif agent.kind == "qlearning":
            q = qlearn.train(env, agent.steps, rng, cap=T)
            plan_time = time.perf_counter() - t0
            batch = qlearn.evaluate(q, env, T, cfg.trials, rng)
        else:
            batch = _uniform_batch(env, T, cfg.trials, rng)
        reached, steps = batch.reached, batch.steps_used
    successes = int(reached.sum())
    mean_steps = float(steps[reached].mean()) if successes else math.nan
    return ResultRow(
        agent.label, cfg.level, cfg.stochasticity.value, T, seed_index, cfg.trials, successes,
        successes / cfg.trials, mean_steps, plan_time * 1e3,
    )


_CONTEXTS: dict = {}


def _cell_job(args):
    config, agent, T, seed_index = args
    ctx = _CONTEXTS.get(config)
    if ctx is None:
        ctx = _CONTEXTS[config] = _Context(config)
    return run_cell(ctx, agent, T, seed_index)


def _workers(config: BenchmarkConfig) -> int:
    env = os.environ.get("WINDPLAN_WORKERS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else None
    n = config.workers if cap is None else min(config.workers, cap)
    return max(1, n)


def run_benchmark(config: BenchmarkConfig) -> list[ResultRow]:
    """Every (agent, horizon, seed) cell, ordered agent-major then horizon then seed."""
    jobs = [(config, a, T, s) for a in config.agents for T in config.horizons for s in range(config.seeds)]
    n = _workers(config)
    if n == 1:
        ctx = _Context(config)
        return [run_cell(ctx, a, T, s) for _, a, T, s in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_cell_job, jobs, chunksize=max(1, len(jobs) // (4 * n))))


def summarize(rows: list[ResultRow]) -> list[tuple[str, int, float]]:
    """Mean success rate per (agent, horizon) across seeds."""
    acc: dict = {}
    for r in rows:
        acc.setdefault((r.agent, r.horizon), []).append(r.success_rate)
    return [(a, T, float(np.mean(v))) for (a, T), v in acc.items()]


def _fmt(row: ResultRow) -> dict:
    d = asdict(row)
    d["success_rate"] = f"{row.success_rate:.4f}"
    d["mean_steps_on_success"] = "" if math.isnan(row.mean_steps_on_success) else f"{row.mean_steps_on_success:.4f}"
    d["planning_wall_time_ms"] = f"{row.planning_wall_time_ms:.3f}"
    return d


def emit_results(rows: list[ResultRow], fmt: str, path: str | Path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    if fmt == "csv":
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(_fmt(r))
    elif fmt == "json":
        out = []
        for r in rows:
            d = asdict(r)
            d["success_rate"] = round(r.success_rate, 4)
            d["mean_steps_on_success"] = None if math.isnan(r.mean_steps_on_success) else round(
                r.mean_steps_on_success, 4)
            d["planning_wall_time_ms"] = round(r.planning_wall_time_ms, 3)
            out.append(d)
        path.write_text(json.dumps(out, indent=1))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _row_from_strings(d: dict) -> ResultRow:
    ms = d["mean_steps_on_success"]
    return ResultRow(
        d["agent"], int(d["level"]), d["stochasticity"], int(d["horizon"]), int(d["seed"]), int(d["trials"]),
        int(d["successes"]), float(d["success_rate"]),
        math.nan if ms in ("", None) else float(ms), float(d["planning_wall_time_ms"]),
    )


def read_results(path: str | Path) -> list[ResultRow]:
    path = Path(path)
    if path.suffix == ".json":
        return [_row_from_strings(d) for d in json.loads(path.read_text())]
    with path.open(newline="") as fh:
        return [_row_from_strings(d) for d in csv.DictReader(fh)]


# -- figure presets -------------------------------------------------------------

@dataclass(frozen=True)
class FigurePreset:
    level: int
    stochasticities: tuple[str, ...]
    agents: tuple[str, ...]
    horizons: str = "1..20"
    learning_curve: bool = False


REPRO = {
    "fig2-top": FigurePreset(2, ("medium", "high"), ("sophisticated", "qlearning:5000", "qlearning:10000")),
    "fig2-mid": FigurePreset(4, ("medium", "high"), ("soph-learned-b:5000", "soph-learned-b:10000",
                                                     "qlearning:10000"), learning_curve=True),
    "fig2-bottom": FigurePreset(5, ("medium", "high"), ("sophisticated", "qlearning:10000", "qlearning:20000"),
                                horizons="1..12"),
    "figA1": FigurePreset(1, ("deterministic",), ("sophisticated", "qlearning:500", "qlearning:5000", "random")),
    "figA2": FigurePreset(3, ("deterministic",), ("soph-learned-b:5000", "soph-learned-b:10000", "qlearning:5000"),
                          learning_curve=True),
}


def learning_curve(geometry: GridGeometry, steps_list, seeds: int, seed: int = 0, cap: int = 20,
                   alpha: float = learning.DEFAULT_ALPHA) -> list[dict]:
    """Model accuracy of randomly explored transition tensors, per (steps, seed)."""
    env = make_environment(geometry)
    out = []
    for steps in steps_list:
        for s in range(seeds):
            rng = np.random.default_rng(np.random.SeedSequence([seed, int(steps), s, 7919]))
            counts = learning.explore_random(env, int(steps), rng, alpha, cap=cap)
            out.append({
                "stochasticity": geometry.stochasticity.value, "steps": int(steps), "seed": s,
                "deviation": learning.model_accuracy(counts.tensor(), env.transitions),
            })
    return out


def run_repro(name: str, out_dir: str | Path, base: dict | None = None) -> list[Path]:
    if name not in REPRO:
        raise ConfigError(f"unknown figure {name!r}; choose from {', '.join(REPRO)}")
    preset = REPRO[name]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for st in preset.stochasticities:
        d = dict(base or {})
        d.update(level=preset.level, stochasticity=st, agents=preset.agents)
        d.setdefault("horizons", preset.horizons)
        cfg = BenchmarkConfig.from_dict(d)
        rows = run_benchmark(cfg)
        path = out_dir / f"{name}_{st}.csv"
        emit_results(rows, "csv", path)
        written.append(path)
        if preset.learning_curve:
            steps = sorted({a.steps for a in cfg.agents if a.kind == "soph-learned-b"})
            curve = learning_curve(cfg.geometry, steps, cfg.seeds, cfg.seed, max(cfg.horizons), cfg.alpha)
            cpath = out_dir / f"{name}_{st}_accuracy.csv"
            with cpath.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=("stochasticity", "steps", "seed", "deviation"),
                                   lineterminator="\n")
                w.writeheader()
                for r in curve:
                    w.writerow({**r, "deviation": f"{r['deviation']:.6f}"})
            written.append(cpath)
    return written
