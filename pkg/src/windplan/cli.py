"""Command-line entry point: ``windplan run | learn-b | inspect | repro``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, learning
from .genmodel import ModelError, save_tensor
from .gridworld import (
    DEFAULT_GEOMETRY, Action, GridGeometry, Stochasticity, build_likelihood_tensor, build_transition_tensor,
    make_environment, observe, state_to_coords,
)
from .harness import ConfigError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _geometry_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("geometry overrides")
    g.add_argument("--geometry", help="JSON file with GridGeometry fields")
    g.add_argument("--start", type=int)
    g.add_argument("--goal", type=int)
    g.add_argument("--wind", help="comma-separated wind strengths per column")


def _geometry(ns, base: GridGeometry = DEFAULT_GEOMETRY) -> GridGeometry:
    geo = GridGeometry.from_json(Path(ns.geometry).read_text()) if ns.geometry else base
    kw = {}
    if ns.start is not None:
        kw["start"] = ns.start
    if ns.goal is not None:
        kw["goal"] = ns.goal
    if ns.wind:
        kw["wind_profile"] = tuple(int(w) for w in ns.wind.split(","))
    if kw:
        d = json.loads(geo.to_json())
        d.update(kw)
        geo = GridGeometry.from_json(d)
    return geo


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="windplan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="benchmark sweep over horizons and seeds")
    r.add_argument("--config", help="JSON file; keys are the flag names below")
    r.add_argument("--level", type=int)
    r.add_argument("--stochasticity", choices=[s.value for s in Stochasticity])
    r.add_argument("--agent", action="append", dest="agents",
                   help="sophisticated | soph-learned-b:N | qlearning:N | random (repeatable)")
    r.add_argument("--horizons", help="inclusive range 6..20 or list 6,8,10")
    r.add_argument("--trials", type=int)
    r.add_argument("--seeds", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--epsilon", type=float)
    r.add_argument("--alpha", type=float)
    r.add_argument("--outcome-threshold", type=float)
    r.add_argument("--action-threshold", type=float)
    r.add_argument("--workers", type=int)
    r.add_argument("--allow-long-horizon", action="store_true", default=None)
    r.add_argument("--format", choices=("csv", "json"))
    r.add_argument("--out", help="output path (.csv or .json)")
    _geometry_args(r)

    lb = sub.add_parser("learn-b", help="random exploration; write Dirichlet counts")
    lb.add_argument("--steps", type=int, required=True)
    lb.add_argument("--seed", type=int, default=0)
    lb.add_argument("--stochasticity", choices=[s.value for s in Stochasticity], default="deterministic")
    lb.add_argument("--alpha", type=float, default=learning.DEFAULT_ALPHA)
    lb.add_argument("--cap", type=int, default=20, help="exploration episode length")
    lb.add_argument("--restart", choices=("random", "start"), default="random")
    lb.add_argument("--out", required=True)
    _geometry_args(lb)

    ins = sub.add_parser("inspect", help="print transitions, observations and preimages")
    ins.add_argument("--stochasticity", choices=[s.value for s in Stochasticity], default="deterministic")
    ins.add_argument("--state", type=int, action="append", help="1-based state number (repeatable)")
    ins.add_argument("--preimage", help="observed pair 'sum,product'")
    ins.add_argument("--counts", help="counts JSON to compare against the true tensor")
    ins.add_argument("--dump", help="write the true transition tensor as JSON")
    _geometry_args(ins)

    rp = sub.add_parser("repro", help="canned sweeps for each figure")
    rp.add_argument("figure", choices=sorted(harness.REPRO))
    rp.add_argument("--out-dir", default=".")
    rp.add_argument("--trials", type=int)
    rp.add_argument("--seeds", type=int)
    rp.add_argument("--seed", type=int)
    rp.add_argument("--horizons")
    rp.add_argument("--workers", type=int)
    return p


_RUN_KEYS = ("level", "stochasticity", "agents", "horizons", "trials", "seeds", "seed", "epsilon", "alpha",
             "outcome_threshold", "action_threshold", "workers", "allow_long_horizon")


def _cmd_run(ns) -> int:
    d = {}
    out, fmt = ns.out, ns.format
    if ns.config:
        d = {k.replace("-", "_"): v for k, v in json.loads(Path(ns.config).read_text()).items()}
        if "agent" in d:
            d["agents"] = [d.pop("agent")] if isinstance(d["agent"], str) else d.pop("agent")
        out = out or d.pop("out", None)
        fmt = fmt or d.pop("format", None)
    for k in _RUN_KEYS:
        v = getattr(ns, k)
        if v is not None:
            d[k] = v
    if "level" not in d:
        raise ConfigError("--level is required")
    if ns.geometry or ns.start is not None or ns.goal is not None or ns.wind:
        base = GridGeometry.from_json(d["geometry"]) if "geometry" in d else DEFAULT_GEOMETRY
        d["geometry"] = _geometry(ns, base)
    cfg = harness.BenchmarkConfig.from_dict(d)
    rows = harness.run_benchmark(cfg)
    if out:
        fmt = fmt or ("json" if str(out).endswith(".json") else "csv")
        harness.emit_results(rows, fmt, out)
    print(f"{'agent':<28} {'T':>3} {'success':>8}")
    for agent, T, rate in harness.summarize(rows):
        print(f"{agent:<28} {T:>3} {rate:>8.4f}")
    return 0


def _cmd_learn_b(ns) -> int:
    if ns.steps < 0:
        raise ConfigError("--steps must be >= 0")
    geo = _geometry(ns).with_stochasticity(Stochasticity(ns.stochasticity))
    env = make_environment(geo)
    counts = learning.explore_random(env, ns.steps, np.random.default_rng(ns.seed), ns.alpha, ns.cap, ns.restart)
    counts.save(ns.out)
    acc = learning.model_accuracy(counts.tensor(), env.transitions)
    print(f"steps={counts.steps} alpha={counts.alpha:.6g} deviation={acc:.6f} -> {ns.out}")
    return 0


def _cmd_inspect(ns) -> int:
    geo = _geometry(ns).with_stochasticity(Stochasticity(ns.stochasticity))
    B = build_transition_tensor(geo)
    print(f"grid {geo.rows}x{geo.cols} start={geo.start} goal={geo.goal} wind={list(geo.wind_profile)} "
          f"stochasticity={geo.stochasticity.value}")
    for s in ns.state or []:
        down, side = state_to_coords(s, geo)
        print(f"state {s}: down={down} side={side} observation={observe(s, geo)}")
        for a in Action:
            col = B[:, s - 1, a]
            nz = np.flatnonzero(col)
            print(f"  {a.name:<2} -> " + ", ".join(f"{i + 1}:{col[i]:.2f}" for i in nz))
    if ns.preimage:
        pair = tuple(int(x) for x in ns.preimage.split(","))
        A = build_likelihood_tensor(geo)
        states = [int(i) + 1 for i in A.preimage(pair)]
        print(f"preimage {pair}: {states}")
    if ns.counts:
        counts = learning.DirichletCounts.load(ns.counts)
        print(f"counts steps={counts.steps} deviation={learning.model_accuracy(counts.tensor(), B):.6f}")
    if ns.dump:
        save_tensor(ns.dump, B, layout="next,prev,action", stochasticity=geo.stochasticity.value)
        print(f"tensor -> {ns.dump}")
    return 0


def _cmd_repro(ns) -> int:
    base = {k: getattr(ns, k) for k in ("trials", "seeds", "seed", "horizons", "workers") if getattr(ns, k) is not None}
    for path in harness.run_repro(ns.figure, ns.out_dir, base):
        print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"run": _cmd_run, "learn-b": _cmd_learn_b, "inspect": _cmd_inspect, "repro": _cmd_repro}[ns.command]
    try:
        return handler(ns)
    except (ConfigError, ModelError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"windplan: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
