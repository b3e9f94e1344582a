import io
import json

import numpy as np
import pytest

from oracles import bayes_enumerate, brute_efe_belief, kl, toy_pomdps
from windplan.genmodel import GenerativeModel, LikelihoodModel, make_preferences, mdp_model, pomdp_model
from windplan.gridworld import DEFAULT_GEOMETRY, build_likelihood_tensor, make_environment
from windplan.planner_mdp import build_efe_table
from windplan.planner_pomdp import (
    NO_PRUNING, BeliefPlanner, InferenceError, PruningConfig, action_probabilities, belief_predict,
    belief_update, efe_belief, point_belief, run_episode_pomdp,
)

A70 = build_likelihood_tensor()


@pytest.fixture(scope="module")
def level5():
    env = make_environment(DEFAULT_GEOMETRY.with_stochasticity("high"), partial=True)
    return env, pomdp_model(env.transitions, env.likelihood, env.goal)


def test_predict_examples(rng):
    B = np.zeros((4, 4, 1))
    B[[1, 2, 3, 0], [0, 1, 2, 3], 0] = 1.0
    np.testing.assert_array_equal(belief_predict(point_belief(2, 4), 0, B), point_belief(3, 4))
    U = np.full((4, 4, 1), 0.25)
    np.testing.assert_allclose(belief_predict(np.full(4, 0.25), 0, U), 0.25)
    R = rng.random((5, 5, 2))
    R /= R.sum(axis=0)
    b = rng.dirichlet(np.ones(5))
    expect = [sum(R[s2, s, 1] * b[s] for s in range(5)) for s2 in range(5)]
    np.testing.assert_allclose(belief_predict(b, 1, R), expect, atol=1e-15)


def test_update_shared_outcome_splits_evenly():
    post = belief_update(np.full(70, 1 / 70), (3, 2), A70)
    assert post[1] == pytest.approx(0.5, abs=1e-12) and post[10] == pytest.approx(0.5, abs=1e-12)
    assert np.count_nonzero(post) == 2


def test_update_unique_outcome_is_point_mass(rng):
    prior = rng.dirichlet(np.ones(70))
    post = belief_update(prior, (12, 32), A70)
    np.testing.assert_allclose(post, point_belief(37, 70), atol=1e-12)


def test_update_consistent_point_prior_unchanged():
    b = point_belief(30, 70)
    np.testing.assert_array_equal(belief_update(b, (5, 4), A70), b)


def test_update_matches_enumeration_for_every_outcome(rng):
    prior = rng.dirichlet(np.ones(70))
    for pair in A70.joint_alphabet:
        np.testing.assert_allclose(belief_update(prior, pair, A70), bayes_enumerate(prior, pair, DEFAULT_GEOMETRY),
                                   atol=1e-12)


def test_update_rejects_impossible_outcome():
    with pytest.raises(InferenceError):
        belief_update(point_belief(0, 70), (5, 4), A70)


@pytest.mark.parametrize("name, model", toy_pomdps(), ids=lambda x: x if isinstance(x, str) else "")
def test_unpruned_planner_matches_tree_oracle(name, model, rng):
    B, J, C = model.transitions, model.likelihood.joint, model.preferences
    planner = BeliefPlanner(model, NO_PRUNING)
    n = model.n_states
    beliefs = [point_belief(s, n) for s in range(n)] + [rng.dirichlet(np.ones(n)) for _ in range(2)]
    depth = 3 if model.n_actions > 2 else 4
    for b in beliefs:
        for a in range(model.n_actions):
            for k in range(1, depth + 1):
                assert planner.efe(b, a, k) == pytest.approx(brute_efe_belief(B, J, C, b, a, k), abs=1e-9)


def test_identity_likelihood_reduces_to_mdp():
    env = make_environment(DEFAULT_GEOMETRY.with_stochasticity("medium"))
    ident = LikelihoodModel((np.eye(70),), (np.arange(70),))
    pm = pomdp_model(env.transitions, ident, env.goal, epsilon=1e-3)
    mm = mdp_model(env.transitions, env.goal, epsilon=1e-3)
    T = 5
    table = build_efe_table(mm, T)
    planner = BeliefPlanner(pm, NO_PRUNING)
    for s in (30, 25, 36, 5):
        b = point_belief(s, 70)
        for tau in (1, 3, 5):
            np.testing.assert_allclose(planner.g_values(b, T - tau + 1), table.values(s, tau, T), atol=1e-9)
            np.testing.assert_allclose(action_probabilities(b, tau, T, pm, planner=planner),
                                       table.distribution(s, tau, T), atol=1e-9)


def test_deterministic_likelihood_has_no_ambiguity(level5):
    env, model = level5
    planner = BeliefPlanner(model)
    nd = planner.node(point_belief(35, 70), 2)
    for a in range(8):
        assert nd.immediate[a] == pytest.approx(kl(nd.outcome_probs[:, a], model.preferences), abs=1e-12)


def test_outcome_threshold_drops_small_branches():
    B = np.zeros((3, 3, 1))
    B[:, :, 0] = np.array([0.05, 0.10, 0.85])[:, None]
    lik = LikelihoodModel((np.eye(3),), (np.arange(3),))
    model = GenerativeModel(B, make_preferences(2, 1e-3, 3), lik)
    planner = BeliefPlanner(model, PruningConfig())
    planner.efe(point_belief(0, 3), 0, 2)
    nd = planner.node(point_belief(0, 3), 2)
    assert set(nd.children) == {(0, 1), (0, 2)}


def test_branch_count_monotone_in_threshold():
    name, model = toy_pomdps()[-1]
    counts = []
    for th in (0.0, 0.1, 0.2, 0.3, 0.5):
        planner = BeliefPlanner(model, PruningConfig(th, th))
        planner.g_values(np.full(model.n_states, 1 / model.n_states), 4)
        counts.append(planner.node_count)
    assert all(x >= y for x, y in zip(counts, counts[1:]))


@pytest.mark.parametrize("T", [4, 5, 6])
def test_pruning_shrinks_level5_tree(level5, T):
    _, model = level5
    sizes = []
    for root in (30, 25, 26, 35):
        pruned, full = BeliefPlanner(model), BeliefPlanner(model, NO_PRUNING)
        pruned.g_values(point_belief(root, 70), T)
        full.g_values(point_belief(root, 70), T)
        sizes.append((pruned.node_count, full.node_count))
    assert all(p <= f for p, f in sizes)
    assert sum(p for p, _ in sizes) < sum(f for _, f in sizes)


def test_root_scores_every_action(level5):
    _, model = level5
    p = action_probabilities(point_belief(30, 70), 1, 6, model)
    assert p.shape == (8,) and np.all(p > 0) and p.sum() == pytest.approx(1.0, abs=1e-12)


def test_symmetric_toy_is_uniform():
    B = np.full((3, 3, 4), 1 / 3)
    lik = LikelihoodModel((np.eye(3),), (np.arange(3),))
    model = GenerativeModel(B, make_preferences(0, 1e-3, 3), lik)
    np.testing.assert_allclose(action_probabilities(np.full(3, 1 / 3), 1, 3, model), 0.25, atol=1e-14)


def test_efe_belief_wrapper_checks_tau(level5):
    _, model = level5
    with pytest.raises(ValueError):
        efe_belief(point_belief(30, 70), 0, 4, 3, model)
    assert efe_belief(point_belief(30, 70), 0, 3, 3, model) > 0


def test_pruning_config_validation():
    for bad in (-0.1, 1.0):
        with pytest.raises(ValueError):
            PruningConfig(bad, 0.1)


def test_episode_short_horizon_fails(level5):
    env, model = level5
    ep = run_episode_pomdp(model, env, 1, np.random.default_rng(0))
    assert not ep.reached_goal and ep.steps_used == 1


def test_deterministic_wind_behaves_like_mdp():
    env = make_environment(DEFAULT_GEOMETRY, partial=True)
    model = pomdp_model(env.transitions, env.likelihood, env.goal)
    planner = BeliefPlanner(model)
    for T, expect in ((6, 0.0), (8, 1.0)):
        hits = [run_episode_pomdp(model, env, T, np.random.default_rng(i), planner=planner).reached_goal
                for i in range(30)]
        assert np.mean(hits) == expect


def test_trace_lines(level5):
    env, model = level5
    buf = io.StringIO()
    ep = run_episode_pomdp(model, env, 4, np.random.default_rng(3), trace=buf)
    lines = [json.loads(x) for x in buf.getvalue().splitlines()]
    assert len(lines) == ep.steps_used
    assert set(lines[0]) == {"tau", "belief_topk", "chosen_action", "action_probs", "observed"}
    assert [x["chosen_action"] for x in lines] == list(ep.actions)
    assert sum(lines[0]["action_probs"]) == pytest.approx(1.0)


def test_uniform_initial_belief_runs(level5):
    env, model = level5
    ep = run_episode_pomdp(model, env, 3, np.random.default_rng(1), initial_belief=np.full(70, 1 / 70))
    assert ep.steps_used <= 3
