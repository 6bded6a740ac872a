import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sarlab.envs import (AlertThenOffEnv, HoldPenaltyWrapper, Mode, RandomWalkEnv, StochasticityWrapper,
                         UnknownEnvError, make_env, optimal_off, random_walk_success_probability,
                         random_walk_success_probability_exact, simulate_uniform_walks)
from sarlab.timegrid import EpisodeFinished


# ---------------------------------------------------------------------------
# random walk

def brute_force_success(n):
    """Enumerate all 2^n move sequences and test the final position directly."""
    hits = 0
    for moves in product((-1, 1), repeat=n):
        pos = Fraction(2 * sum(moves), n)
        hits += abs(pos) >= 1
    return Fraction(hits, 2 ** n)


@pytest.mark.parametrize("n", [2, 4, 6, 8, 12, 16])
def test_random_walk_exact_matches_enumeration(n):
    assert random_walk_success_probability_exact(n) == brute_force_success(n)


def test_random_walk_known_values():
    assert random_walk_success_probability(4) == 0.625
    assert random_walk_success_probability(2) == 0.5
    assert random_walk_success_probability(4096) < 0.01


def test_random_walk_decreasing_from_four():
    vals = [random_walk_success_probability_exact(n) for n in (4, 8, 16, 64, 256, 1024)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_random_walk_two_steps_below_four_steps():
    # with N = 2 only X = 0 or X = 2 succeed, so the sequence rises before it falls
    assert random_walk_success_probability_exact(2) < random_walk_success_probability_exact(4)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_random_walk_empirical_within_3se(n):
    p = random_walk_success_probability(n)
    m = 20000
    r = simulate_uniform_walks(n, m, np.random.default_rng(n))
    se = math.sqrt(p * (1 - p) / m)
    assert abs(r.mean() - p) <= 3 * se


def test_random_walk_env_lattice_and_reward():
    env = RandomWalkEnv(8)
    env.reset()
    for i, a in enumerate([1, 1, -1, 1, 1, 1, 1, 1], 1):
        obs, r, done = env.step((a,))
        assert obs[0] * 8 / 2 == pytest.approx(round(obs[0] * 4))
        assert done == (i == 8)
        if not done:
            assert r == 0.0
    assert r == 1.0  # 7 right, 1 left: position 1.5
    with pytest.raises(EpisodeFinished):
        env.step((1,))


def test_random_walk_rejects_odd():
    with pytest.raises(ValueError):
        RandomWalkEnv(5)
    with pytest.raises(ValueError):
        random_walk_success_probability_exact(3)


# ---------------------------------------------------------------------------
# AlertThenOff

def fixed_flip(t):
    return lambda rng: t


def test_off_while_normal_is_penalized():
    env = AlertThenOffEnv(delta=1e-3, x=0.01, nu=1e4, flip_sampler=fixed_flip(0.5))
    env.reset()
    _, r, done = env.step((1.0, 0.0))
    assert done and r == -1e4 and env.penalties == 1


def test_off_within_window_returns_to_normal():
    env = AlertThenOffEnv(delta=1e-3, x=0.01, flip_sampler=fixed_flip(0.3))
    obs = env.reset()
    while obs[0] == 0:
        obs, r, done = env.step((0.0, 0.0))
        assert not done
    flip_t = env.time
    assert flip_t == pytest.approx(0.3, abs=1e-12)
    obs, r, done = env.step((1.0, 0.0))
    assert obs[0] == 0 and not done and r == 0.0


def test_missing_the_window_is_penalized():
    env = AlertThenOffEnv(delta=1e-3, x=0.01, nu=50.0, flip_sampler=fixed_flip(0.3))
    env.reset()
    rewards = []
    done = False
    while not done:
        _, r, done = env.step((0.0, 0.0))
        rewards.append(r)
    assert rewards[-1] == -50.0
    assert env.time == pytest.approx(0.3 + 0.01 + 1e-3, abs=1e-9)


def test_optimal_off_return_is_standard_normal():
    env = AlertThenOffEnv(delta=1e-2, x=0.05, seed=4)
    rets = []
    for _ in range(20000):
        obs = env.reset()
        total, done = 0.0, False
        while not done:
            obs, r, done = env.step((optimal_off(obs), 0.0))
            total += r
        rets.append(total)
    rets = np.array(rets)
    assert env.penalties == 0
    assert abs(rets.mean()) < 0.03
    assert abs(rets.var() - 1.0) < 0.05


def test_reward_stream_accrues_with_penalty():
    env = AlertThenOffEnv(delta=0.1, x=0.15, nu=7.0, f=lambda num: 2.0 * num, flip_sampler=fixed_flip(0.55))
    env.reset()
    _, r, _ = env.step((0.0, 1.5))
    assert r == pytest.approx(0.3)
    _, r, done = env.step((1.0, 1.5))
    assert done and r == pytest.approx(0.3 - 7.0)


def test_alert_then_off_validation():
    with pytest.raises(ValueError):
        AlertThenOffEnv(delta=0.02, x=0.01)
    with pytest.raises(ValueError):
        AlertThenOffEnv(delta=0.003, x=0.01)


def test_quiet_fast_path_matches_steps():
    a = AlertThenOffEnv(delta=1e-3, x=0.01, flip_sampler=fixed_flip(0.4217), f=lambda n: n)
    b = AlertThenOffEnv(delta=1e-3, x=0.01, flip_sampler=fixed_flip(0.4217), f=lambda n: n)
    a.reset()
    b.reset()
    act = (0.0, 0.7)
    k = a.quiet_steps(act)
    assert k > 0
    rate = a.advance_quiet(k, act)
    total = sum(b.step(act)[1] for _ in range(k))
    assert a.steps == b.steps
    assert total == pytest.approx(k * rate, rel=1e-12)
    assert a.step(act)[0][0] == b.step(act)[0][0]


# ---------------------------------------------------------------------------
# pendulum and point mass through the registry

def test_pendulum_random_policy_falls_within_a_few_seconds():
    env = make_env("pendulum", 0.01, seed=0)
    rng = np.random.default_rng(0)
    lengths = []
    for _ in range(30):
        env.reset()
        while not env.done:
            env.step(rng.normal(size=1))
        lengths.append(env.time)
    assert 0.2 < np.mean(lengths) < 3.0


def test_point_mass_never_terminal_and_negative_reward():
    env = make_env("point_mass", 0.02, seed=1, base_steps=50)
    env.reset()
    rs = []
    while not env.done:
        rs.append(env.step(np.zeros(2))[1])
    assert env.truncated and not env.terminated and len(rs) == 50
    assert max(rs) < 0


def test_point_mass_exact_matches_small_step_euler():
    from sarlab.timegrid import Integrator
    exact = make_env("point_mass", 0.1, seed=2, integrator=Integrator.EXACT)
    fine = make_env("point_mass", 0.1 / 1000, seed=2, delta0=0.02)
    s0 = exact.reset()
    fine.reset()
    fine.state = s0.copy()
    a = np.array([0.3, -0.7])
    s1 = exact.step(a)[0]
    for _ in range(1000):
        s2 = fine.step(a)[0]
    assert np.allclose(s1, s2, atol=1e-4)


def test_registry_rejects_unknown():
    with pytest.raises(UnknownEnvError):
        make_env("hopper")
    with pytest.raises(UnknownEnvError):
        make_env("pendulum+wind")
    with pytest.raises(KeyError):
        make_env("pendulum", params={"sigma_ext": 2.0})


def test_registry_horizon_scaling():
    a = make_env("pendulum", 0.04)
    b = make_env("pendulum", 0.02)
    assert b.max_steps == 2 * a.max_steps == 2000


# ---------------------------------------------------------------------------
# wrappers

def rollout(env, actions, decide_every=1):
    out = [env.reset()]
    for i, a in enumerate(actions):
        if env.done:
            break
        if i % decide_every == 0:
            env.mark_decision()
        out.append(env.step(a)[0])
    return np.array(out)


@pytest.mark.parametrize("suffix,params", [("ext_force", {"p_ext": 0.0}), ("act_noise", {"p_act": 0.0}),
                                           ("hold_penalty", {"r_penalty": 0.0})])
def test_zero_probability_wrappers_are_transparent(suffix, params):
    acts = np.random.default_rng(0).normal(size=(200, 1))
    plain = rollout(make_env("pendulum", 0.01, seed=5), acts)
    wrapped_env = make_env("pendulum+" + suffix, 0.01, seed=5, params=params)
    wrapped = rollout(wrapped_env, acts)
    # the registry derives the inner seed identically whether or not wrapped
    assert np.array_equal(plain[:, :4], wrapped[:, :4])


def test_action_noise_zero_sigma_is_identity():
    acts = np.random.default_rng(1).normal(size=(100, 1))
    a = rollout(make_env("pendulum", 0.01, seed=3), acts)
    b = rollout(make_env("pendulum+act_noise", 0.01, seed=3, params={"p_act": 1.0, "sigma_act": 0.0}), acts)
    assert np.array_equal(a, b)


def test_perceptible_force_observation():
    env = make_env("pendulum+percept_force", 0.01, seed=2, params={"p_ext": 1.0})
    assert env.obs_dim == 5
    obs = env.reset()
    assert obs.shape == (5,) and obs[4] == 0
    seen = []
    for _ in range(30):
        if env.done:
            env.reset()
        env.mark_decision()
        obs, _, _ = env.step([0.0])
        seen.append(obs[4])
        assert -1.0 <= obs[4] <= 1.0
    assert any(v != 0 for v in seen)


def test_force_sampled_only_at_decisions_and_applied_once():
    env = make_env("pendulum+ext_force", 0.01, seed=2, params={"p_ext": 1.0})
    env.reset()
    env.mark_decision()
    assert env.decision_force is not None
    env.step([0.0])
    assert env.last_force is not None
    for _ in range(5):
        env.step([0.0])
        assert env.last_force is None


def test_stochasticity_wrapper_validation():
    with pytest.raises(ValueError):
        StochasticityWrapper(RandomWalkEnv(4), Mode.EXTERNAL_FORCE)
    with pytest.raises(ValueError):
        make_env("pendulum+ext_force", params={"p_ext": 1.5})


def test_hold_penalty_charged_once_per_hold():
    env = HoldPenaltyWrapper(make_env("point_mass", 0.01, seed=0), t_thres=0.04, r_penalty=-1.0)
    env.reset()
    a, b = np.array([0.1, 0.0]), np.array([0.0, 0.1])
    base = [env.step(a)[1] for _ in range(3)]
    assert env.penalty_count == 0
    env.step(a)
    assert env.penalty_count == 1
    for _ in range(10):
        env.step(a)
    assert env.penalty_count == 1
    for _ in range(4):
        env.step(b)
    assert env.penalty_count == 2
    assert not hasattr(env.reset(), "hold")


@settings(max_examples=40, deadline=None)
@given(holds=st.lists(st.integers(1, 3), min_size=1, max_size=30))
def test_short_holds_are_never_penalized(holds):
    env = HoldPenaltyWrapper(make_env("point_mass", 0.01, seed=0), t_thres=0.04)
    env.reset()
    for k, h in enumerate(holds):
        a = np.array([0.01 * (k + 1), 0.0])
        for _ in range(h):
            env.step(a)
    assert env.penalty_count == 0
