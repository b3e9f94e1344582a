"""Randomised invariants, 1000 examples each."""
import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_efe, random_transitions
from windplan.genmodel import (
    GenerativeModel, LikelihoodModel, kl_divergence, make_preferences, mdp_model, normalize_counts, softmax,
)
from windplan.gridworld import (
    GridGeometry, Stochasticity, build_likelihood_tensor, build_transition_tensor, coords_to_state, make_environment,
    observe, state_to_coords, step,
)
from windplan.learning import DirichletCounts, update_counts
from windplan.planner_mdp import build_efe_table, sample_action
from windplan.planner_pomdp import BeliefPlanner, belief_predict, belief_update
from windplan.qlearn import train

N = settings(max_examples=1000, deadline=None)
seeds = st.integers(0, 2**32 - 1)


@st.composite
def geometries(draw):
    rows = draw(st.integers(2, 7))
    cols = draw(st.integers(2, 10))
    wind = draw(st.lists(st.integers(0, rows - 1), min_size=cols, max_size=cols))
    start = draw(st.integers(1, rows * cols))
    goal = draw(st.integers(1, rows * cols).filter(lambda g: g != start))
    return GridGeometry(rows, cols, start, goal, tuple(wind), draw(st.sampled_from(list(Stochasticity))))


def dist(rng, n):
    return rng.dirichlet(np.full(n, 0.5))


# -- gridworld -------------------------------------------------------------------

@N
@given(geometries())
def test_transition_columns_are_distributions(geo):
    B = build_transition_tensor(geo)
    assert B.min() >= 0
    np.testing.assert_allclose(B.sum(axis=0), 1.0, atol=1e-12)
    nnz = np.count_nonzero(B, axis=0)
    assert nnz.max() <= 3
    if geo.stochasticity is Stochasticity.DETERMINISTIC:
        assert np.all(nnz == 1)


@N
@given(geometries(), st.data())
def test_coordinates_biject(geo, data):
    s = data.draw(st.integers(1, geo.n_states))
    down, side = state_to_coords(s, geo)
    assert coords_to_state(down, side, geo) == s
    A = build_likelihood_tensor(geo)
    assert s - 1 in A.preimage(observe(s, geo))


@N
@given(geometries(), seeds)
def test_step_is_seeded(geo, seed):
    B = build_transition_tensor(geo)
    walk = []
    for _ in range(2):
        rng = np.random.default_rng(seed)
        s, path = geo.start_index, []
        for a in range(8):
            s = step(s, a, B, rng)
            path.append(s)
        walk.append(path)
    assert walk[0] == walk[1]


# -- probability utilities ---------------------------------------------------

@N
@given(seeds, st.integers(2, 70))
def test_kl_non_negative_zero_iff_equal_and_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    q, c = dist(rng, n), rng.dirichlet(np.ones(n))
    d = kl_divergence(q, c)
    assert d >= -1e-12
    assert abs(kl_divergence(c, c)) < 1e-10
    if np.abs(q - c).max() > 1e-3:
        assert d > 0
    perm = rng.permutation(n)
    assert math.isclose(kl_divergence(q[perm], c[perm]), d, rel_tol=1e-9, abs_tol=1e-12)


@N
@given(seeds, st.floats(1e-6, 1e6))
def test_normalize_counts_scale_invariant(seed, lam):
    rng = np.random.default_rng(seed)
    counts = rng.random((6, 6, 3)) + 1e-3
    T = normalize_counts(counts)
    np.testing.assert_allclose(normalize_counts(lam * counts), T, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(T.sum(axis=0), 1.0, atol=1e-12)


@N
@given(st.integers(2, 200), st.data())
def test_preferences_positive_normalised_goal_argmax(n, data):
    goal = data.draw(st.integers(0, n - 1))
    eps = data.draw(st.floats(1e-300, 1.0 / n, exclude_max=True))
    c = make_preferences(goal, eps, n)
    assert np.all(c > 0) and int(np.argmax(c)) == goal
    assert abs(c.sum() - 1.0) < 1e-12


@N
@given(seeds, st.floats(-1e3, 1e3))
def test_softmax_shift_invariant(seed, k):
    g = np.random.default_rng(seed).normal(size=8) * 5
    p = softmax(-g)
    np.testing.assert_allclose(softmax(-(g + k)), p, rtol=1e-9, atol=1e-15)
    assert abs(p.sum() - 1.0) < 1e-12 and np.all(p > 0)


# -- planners -----------------------------------------------------------------------

@N
@given(seeds, st.integers(2, 4), st.integers(1, 3), st.integers(1, 3))
def test_memo_table_matches_tree_and_is_bounded(seed, n_states, n_actions, T):
    rng = np.random.default_rng(seed)
    model = mdp_model(random_transitions(rng, n_states, n_actions), 0, 1e-3)
    table = build_efe_table(model, T)
    assert table.entries <= n_states * T * n_actions
    assert table.g.min() >= -1e-12
    np.testing.assert_allclose(table.policy.sum(axis=-1), 1.0, atol=1e-12)
    s, a = int(rng.integers(n_states)), int(rng.integers(n_actions))
    assert abs(table.values(s, 1, T)[a] - brute_efe(model.transitions, model.preferences, s, a, T)) < 1e-9


@N
@given(st.integers(1, 20), st.sampled_from(list(Stochasticity)))
def test_level_table_size_bound(T, stoch):
    env = _env(stoch)
    table = build_efe_table(mdp_model(env.transitions, env.goal), T)
    assert table.entries <= 70 * T * 8 and table.g.min() >= -1e-12


_ENVS = {}


def _env(stoch):
    if stoch not in _ENVS:
        from windplan.gridworld import DEFAULT_GEOMETRY

        _ENVS[stoch] = make_environment(DEFAULT_GEOMETRY.with_stochasticity(stoch))
    return _ENVS[stoch]


@N
@given(seeds)
def test_sample_action_valid_and_seeded(seed):
    rng = np.random.default_rng(seed)
    p = dist(rng, 8)
    a = sample_action(p, np.random.default_rng(seed))
    assert a == sample_action(p, np.random.default_rng(seed)) and p[a] > 0


A70 = build_likelihood_tensor()


@N
@given(seeds, st.integers(0, 7))
def test_belief_filtering_preserves_normalisation(seed, a):
    rng = np.random.default_rng(seed)
    B = _env(Stochasticity.HIGH).transitions
    b = dist(rng, 70)
    pred = belief_predict(b, a, B)
    assert abs(pred.sum() - 1) < 1e-10 and pred.min() >= 0
    s = int(rng.choice(70, p=pred))
    post = belief_update(pred, observe(s + 1), A70)
    assert abs(post.sum() - 1) < 1e-10 and post.min() >= 0


@N
@given(seeds)
def test_unique_outcome_never_raises_entropy(seed):
    rng = np.random.default_rng(seed)
    unique = [p for p in A70.joint_alphabet if A70.preimage(p).size == 1]
    pair = unique[int(rng.integers(len(unique)))]
    prior = dist(rng, 70)
    prior[A70.preimage(pair)[0]] += 1e-3
    prior /= prior.sum()
    post = belief_update(prior, pair, A70)
    h = lambda p: -np.sum(p[p > 0] * np.log(p[p > 0]))
    assert h(post) <= h(prior) + 1e-12


@N
@given(seeds, st.integers(1, 3))
def test_risk_invariant_to_outcome_relabelling(seed, depth):
    rng = np.random.default_rng(seed)
    n_states, n_out = 3, 4
    B = random_transitions(rng, n_states, 2)
    A = rng.random((n_out, n_states)) + 0.01
    A /= A.sum(axis=0)
    C = rng.dirichlet(np.ones(n_out))
    perm = rng.permutation(n_out)
    m1 = GenerativeModel(B, C, LikelihoodModel((A,), (np.arange(n_out),)))
    m2 = GenerativeModel(B, C[perm], LikelihoodModel((A[perm],), (np.arange(n_out),)))
    b = dist(rng, n_states)
    g1 = BeliefPlanner(m1).g_values(b, depth)
    g2 = BeliefPlanner(m2).g_values(b, depth)
    np.testing.assert_allclose(g1, g2, rtol=1e-9, atol=1e-12)


# -- learning and Q-learning ----------------------------------------------------------

@N
@given(seeds, st.floats(1e-3, 10.0))
def test_update_touches_one_cell(seed, weight):
    rng = np.random.default_rng(seed)
    c = DirichletCounts.uniform(10, 3, alpha=float(rng.random() + 0.01))
    before = c.counts.copy()
    s, a, s2 = int(rng.integers(10)), int(rng.integers(3)), int(rng.integers(10))
    update_counts(c, s, a, s2, weight)
    diff = c.counts - before
    assert np.count_nonzero(diff) == 1 and math.isclose(diff[s2, s, a], weight, rel_tol=1e-12)
    assert math.isclose(c.counts.sum() - before.sum(), weight, rel_tol=1e-9)
    assert c.counts.min() >= c.alpha


@N
@given(seeds)
def test_counts_order_independent(seed):
    rng = np.random.default_rng(seed)
    moves = [(int(rng.integers(5)), int(rng.integers(2)), int(rng.integers(5))) for _ in range(30)]
    a, b = DirichletCounts.uniform(5, 2), DirichletCounts.uniform(5, 2)
    for m in moves:
        update_counts(a, *m)
    for i in rng.permutation(len(moves)):
        update_counts(b, *moves[i])
    np.testing.assert_array_equal(a.counts, b.counts)


@N
@given(seeds, st.integers(0, 300))
def test_q_training_is_deterministic(seed, steps):
    env = _env(Stochasticity.MEDIUM)
    a = train(env, steps, seed, cap=10)
    b = train(env, steps, seed, cap=10)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.all(np.isfinite(a.values))
