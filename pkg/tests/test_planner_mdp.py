import math

import numpy as np
import pytest

from oracles import bfs_shortest_path, brute_efe, toy_mdps
from windplan.genmodel import GenerativeModel, ModelError, mdp_model
from windplan.gridworld import (
    DEFAULT_GEOMETRY, Environment, GridGeometry, apply_wind_and_move, build_transition_tensor, make_environment,
)
from windplan.planner_mdp import (
    action_distribution, build_efe_table, efe, run_episode, run_episodes, sample_action,
)


@pytest.fixture(scope="module")
def level1():
    env = make_environment()
    return env, mdp_model(env.transitions, env.goal)


def test_last_step_into_goal_is_kl_of_point_mass():
    env = make_environment()
    model = mdp_model(env.transitions, env.goal, epsilon=1e-3)
    s = next(i for i in range(70) if env.transitions[env.goal, i, 2] == 1.0 and i != env.goal)
    assert efe(s, 2, tau=5, T=5, model=model) == pytest.approx(math.log(1.069), abs=1e-12)


def test_symmetric_model_gives_equal_g():
    B = np.full((5, 5, 8), 0.2)
    model = GenerativeModel(B, np.full(5, 0.2))
    table = build_efe_table(model, 4)
    for k in range(4):
        assert np.ptp(table.g[k], axis=1).max() < 1e-14
    np.testing.assert_allclose(action_distribution(0, 1, 4, model, table), 1 / 8)


@pytest.mark.parametrize("use_numba", [True, False])
@pytest.mark.parametrize("name, model", toy_mdps(), ids=lambda x: x if isinstance(x, str) else "")
def test_table_matches_brute_force(name, model, use_numba):
    T = 3
    table = build_efe_table(model, T, use_numba=use_numba)
    B, C = model.transitions, model.preferences
    for s in range(model.n_states):
        for a in range(model.n_actions):
            for tau in range(1, T + 1):
                assert table.values(s, tau, T)[a] == pytest.approx(brute_efe(B, C, s, a, T - tau + 1), abs=1e-9)


def test_table_serves_shorter_horizons(level1):
    _, model = level1
    big = build_efe_table(model, 12)
    small = build_efe_table(model, 5)
    np.testing.assert_allclose(big.values(30, 2, 5), small.values(30, 2, 5), atol=1e-12)
    with pytest.raises(ValueError):
        small.values(30, 1, 6)


def test_tau_out_of_range(level1):
    _, model = level1
    table = build_efe_table(model, 4)
    for tau in (0, 5):
        with pytest.raises(ValueError):
            table.values(30, tau, 4)


def test_softmax_ratio_identity():
    env = make_environment(DEFAULT_GEOMETRY.with_stochasticity("medium"))
    table = build_efe_table(mdp_model(env.transitions, env.goal, 1e-3), 3)
    g = table.values(25, 1, 3)
    p = table.distribution(25, 1, 3)
    for a in range(8):
        for b in range(8):
            assert p[a] / p[b] == pytest.approx(math.exp(g[b] - g[a]), rel=1e-12)


def test_argmax_at_start_is_on_a_shortest_path(level1):
    env, model = level1
    table = build_efe_table(model, 8)
    a = int(np.argmax(table.distribution(env.start, 1, 8)))
    nxt = apply_wind_and_move(env.start + 1, a, 0)
    rest = bfs_shortest_path(GridGeometry(start=nxt)) if nxt != 38 else 0
    assert 1 + rest == bfs_shortest_path(DEFAULT_GEOMETRY)


def test_g_is_non_negative_and_table_bounded(level1):
    env, model = level1
    for T in (1, 5, 15):
        table = build_efe_table(model, T)
        assert table.g.min() >= -1e-12
        assert table.entries <= 70 * T * 8
        np.testing.assert_allclose(table.policy.sum(axis=-1), 1.0, atol=1e-12)


def test_sample_action():
    rng = np.random.default_rng(3)
    point = np.eye(8)[5]
    assert all(sample_action(point, rng) == 5 for _ in range(100))
    draws = np.array([sample_action(np.full(8, 1 / 8), rng) for _ in range(100_000)])
    assert np.abs(np.bincount(draws, minlength=8) / draws.size - 0.125).max() < 0.005
    assert sample_action(np.full(8, 1 / 8), np.random.default_rng(9)) == sample_action(
        np.full(8, 1 / 8), np.random.default_rng(9))
    with pytest.raises(ModelError):
        sample_action(np.full(8, 0.2), rng)


def test_level1_episode_results(level1):
    env, model = level1
    rng = np.random.default_rng(0)
    batch = run_episodes(model, env, 8, 100, rng)
    assert batch.success_rate == 1.0
    assert np.all(batch.steps_used <= 8)
    ep = batch.episode(0)
    assert ep.reached_goal and ep.trajectory[-1] == env.goal and len(ep.actions) == ep.steps_used
    short = run_episodes(model, env, 6, 100, rng)
    assert short.success_rate == 0.0
    assert np.all(short.steps_used == 6)


def test_goal_equals_start():
    B = build_transition_tensor()
    env = Environment(B, 37, 37)
    ep = run_episode(mdp_model(B, 37), env, 5, np.random.default_rng(0))
    assert ep.reached_goal and ep.steps_used == 0 and ep.trajectory == (37,)


def test_shape_mismatch_rejected(level1):
    env, _ = level1
    toy = toy_mdps()[0][1]
    with pytest.raises(ValueError):
        run_episodes(toy, env, 3, 1, np.random.default_rng(0))


def test_episodes_are_seeded(level1):
    env = make_environment(DEFAULT_GEOMETRY.with_stochasticity("high"))
    model = mdp_model(env.transitions, env.goal)
    a = run_episodes(model, env, 10, 20, np.random.default_rng(5))
    b = run_episodes(model, env, 10, 20, np.random.default_rng(5))
    np.testing.assert_array_equal(a.states, b.states)


def test_horizon_monotone_on_level1(level1):
    env, model = level1
    rates = [run_episodes(model, env, T, 100, np.random.default_rng(T)).success_rate for T in range(1, 15)]
    assert all(x <= y for x, y in zip(rates, rates[1:]))
