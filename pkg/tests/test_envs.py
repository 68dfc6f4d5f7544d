import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from marlscale.envs import (
    EnvConfig,
    ParticleEnv,
    WorldState,
    boundary_penalty,
    obs_dim,
    observe,
    observe_all,
    reset,
    reward_cooperative_navigation,
    reward_predator_prey,
    scripted_prey_policy,
    space_dims,
    step,
)


def make_state(learners, prey=(), landmarks=(), vel=None):
    lp = np.asarray(learners, dtype=float).reshape(-1, 2)
    pp = np.asarray(prey, dtype=float).reshape(-1, 2)
    return WorldState(
        learner_pos=lp,
        learner_vel=np.zeros_like(lp) if vel is None else np.asarray(vel, dtype=float),
        prey_pos=pp,
        prey_vel=np.zeros_like(pp),
        landmark_pos=np.asarray(landmarks, dtype=float).reshape(-1, 2),
    )


class TestConfig:
    @pytest.mark.parametrize("n,prey", [(1, 1), (3, 1), (4, 2), (6, 2), (12, 4), (13, 5)])
    def test_predator_prey_defaults(self, n, prey):
        cfg = EnvConfig("predator_prey", n)
        assert cfg.n_prey == prey == math.ceil(n / 3)
        assert cfg.n_landmarks == 2

    def test_navigation_defaults(self):
        cfg = EnvConfig("cooperative_navigation", 3)
        assert (cfg.n_prey, cfg.n_landmarks, cfg.max_episode_len) == (0, 3, 25)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(scenario="tag"),
            dict(n_learners=0),
            dict(scenario="predator_prey", n_prey=0),
            dict(scenario="cooperative_navigation", n_prey=1),
            dict(scenario="cooperative_navigation", n_landmarks=0),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            EnvConfig(**kwargs)

    def test_unknown_scenario_lists_valid(self):
        with pytest.raises(ValueError, match="predator_prey, cooperative_navigation"):
            EnvConfig("tag")


class TestDims:
    @pytest.mark.parametrize("n,l,m,expected", [(3, 2, 1, 20), (6, 2, 2, 36), (1, 0, 0, 4)])
    def test_obs_dim_examples(self, n, l, m, expected):
        assert obs_dim(n, l, m) == expected
        state, obs = reset(EnvConfig("predator_prey" if m else "cooperative_navigation", n,
                                     n_prey=m, n_landmarks=l or 1), np.random.default_rng(0))
        if l:
            assert obs.shape == (n, expected)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 10), l=st.integers(0, 6), m=st.integers(1, 6))
    def test_obs_dim_closed_form(self, n, l, m):
        cfg = EnvConfig("predator_prey", n, n_prey=m, n_landmarks=l)
        state, obs = reset(cfg, np.random.default_rng(n * 100 + l * 10 + m))
        assert obs.shape == (n, 4 + 2 * l + 4 * (n - 1) + 4 * m)
        for i in range(n):
            assert observe(state, i, cfg).shape == (obs.shape[1],)

    def test_space_dims_examples(self):
        assert space_dims(EnvConfig("predator_prey", 3, n_prey=1, n_landmarks=2)) == (20, 2, 66)
        assert space_dims(EnvConfig("predator_prey", 6, n_prey=2, n_landmarks=2))[2] == 228

    def test_critic_ratio_tends_to_four(self):
        dims = {n: space_dims(EnvConfig("predator_prey", n))[2] for n in range(3, 97)}
        ratios = [dims[2 * n] / dims[n] for n in range(3, 49)]
        assert abs(ratios[-1] - 4.0) < 0.1
        assert abs(ratios[-1] - 4.0) < abs(ratios[0] - 4.0)


class TestResetAndObserve:
    def test_reset_deterministic(self):
        cfg = EnvConfig("predator_prey", 3)
        a, oa = reset(cfg, np.random.default_rng(4))
        b, ob = reset(cfg, np.random.default_rng(4))
        assert np.array_equal(oa, ob)
        assert np.array_equal(a.learner_pos, b.learner_pos)
        assert np.array_equal(a.prey_pos, b.prey_pos)

    def test_reset_contract(self):
        cfg = EnvConfig("cooperative_navigation", 3)
        state, _ = reset(cfg, np.random.default_rng(0))
        assert state.landmark_pos.shape == (3, 2) and state.prey_pos.shape == (0, 2)
        assert np.all(state.learner_vel == 0) and state.step_index == 0
        assert np.all(np.abs(state.learner_pos) <= cfg.world_half_width)

    def test_layout(self):
        cfg = EnvConfig("predator_prey", 2, n_prey=1, n_landmarks=1)
        state = make_state([[0.1, 0.2], [0.5, -0.5]], prey=[[1.0, 1.0]], landmarks=[[0.0, 0.0]],
                           vel=[[0.3, 0.4], [-0.1, 0.0]])
        state.prey_vel[:] = [[0.7, 0.8]]
        expected = [0.3, 0.4, 0.1, 0.2, -0.1, -0.2, 0.4, -0.7, -0.1, 0.0, 0.9, 0.8, 0.7, 0.8]
        np.testing.assert_allclose(observe(state, 0, cfg), expected, atol=1e-15)

    def test_landmark_coincident_gives_zero(self):
        cfg = EnvConfig("cooperative_navigation", 1, n_landmarks=1)
        state = make_state([[0.3, -0.2]], landmarks=[[0.3, -0.2]])
        assert np.array_equal(observe(state, 0, cfg)[4:6], [0.0, 0.0])

    def test_observe_index_error(self):
        cfg = EnvConfig("predator_prey", 3)
        state, _ = reset(cfg, np.random.default_rng(0))
        with pytest.raises(IndexError):
            observe(state, 3, cfg)

    @pytest.mark.parametrize("scenario", ["predator_prey", "cooperative_navigation"])
    @pytest.mark.parametrize("n", [1, 2, 5])
    def test_vectorized_matches_per_agent(self, scenario, n):
        cfg = EnvConfig(scenario, n)
        state, obs = reset(cfg, np.random.default_rng(n))
        state.learner_vel = np.random.default_rng(9).normal(size=(n, 2))
        obs = observe_all(state, cfg)
        for i in range(n):
            assert np.array_equal(obs[i], observe(state, i, cfg))


class TestStep:
    def test_zero_action_fixed_point(self):
        cfg = EnvConfig("cooperative_navigation", 2)
        state = make_state([[0.1, 0.2], [-0.3, 0.4]], landmarks=[[0, 0], [1, 1]])
        nxt, *_ = step(state, np.zeros((2, 2)), cfg, np.random.default_rng(0))
        assert np.array_equal(nxt.learner_pos, state.learner_pos)

    def test_damping_hand_evaluation(self):
        cfg = EnvConfig("cooperative_navigation", 1)
        state = make_state([[0.0, 0.0]], landmarks=[[0.5, 0.5]], vel=[[1.0, 0.0]])
        nxt, *_ = step(state, np.zeros((1, 2)), cfg, np.random.default_rng(0))
        np.testing.assert_allclose(nxt.learner_vel, [[0.75, 0.0]], rtol=0, atol=1e-15)
        np.testing.assert_allclose(nxt.learner_pos, [[0.075, 0.0]], rtol=0, atol=1e-15)

    def test_speed_clipped(self):
        cfg = EnvConfig("cooperative_navigation", 1)
        state = make_state([[0.0, 0.0]], landmarks=[[0, 0]], vel=[[1.0, 1.0]])
        nxt, *_ = step(state, np.ones((1, 2)), cfg, np.random.default_rng(0))
        assert np.linalg.norm(nxt.learner_vel) == pytest.approx(1.0)

    def test_actions_clipped(self):
        cfg = EnvConfig("cooperative_navigation", 1)
        state = make_state([[0.0, 0.0]], landmarks=[[0, 0]])
        a, *_ = step(state, np.array([[5.0, 0.0]]), cfg, np.random.default_rng(0))
        b, *_ = step(state, np.array([[1.0, 0.0]]), cfg, np.random.default_rng(0))
        assert np.array_equal(a.learner_vel, b.learner_vel)

    def test_done_at_25_and_finished_error(self):
        env = ParticleEnv(EnvConfig("predator_prey", 3), np.random.default_rng(0))
        env.reset()
        dones = [env.step(np.zeros((3, 2)))[2] for _ in range(25)]
        assert dones == [False] * 24 + [True]
        with pytest.raises(RuntimeError):
            env.step(np.zeros((3, 2)))

    def test_determinism(self):
        cfg = EnvConfig("predator_prey", 4)
        state, _ = reset(cfg, np.random.default_rng(1))
        acts = np.random.default_rng(2).uniform(-1, 1, size=(4, 2))
        a = step(state, acts, cfg, np.random.default_rng(3))
        b = step(state, acts, cfg, np.random.default_rng(3))
        assert np.array_equal(a[0].learner_pos, b[0].learner_pos)
        assert np.array_equal(a[0].prey_pos, b[0].prey_pos)
        assert np.array_equal(a[1], b[1])

    def test_zero_action_speed_non_increasing(self):
        cfg = EnvConfig("cooperative_navigation", 3)
        state, _ = reset(cfg, np.random.default_rng(0))
        state.learner_vel = np.random.default_rng(1).uniform(-0.7, 0.7, size=(3, 2))
        speed = np.linalg.norm(state.learner_vel, axis=1)
        for _ in range(20):
            state, *_ = step(state, np.zeros((3, 2)), cfg, None)
            new = np.linalg.norm(state.learner_vel, axis=1)
            assert np.all(new <= speed)
            speed = new

    def test_long_random_rollout_stays_finite(self):
        env = ParticleEnv(EnvConfig("predator_prey", 3), np.random.default_rng(0))
        rng = np.random.default_rng(1)
        obs = env.reset()
        for t in range(10_000):
            obs, rewards, done = env.step(rng.uniform(-1, 1, size=(3, 2)))
            assert np.all(np.isfinite(obs)) and np.all(np.isfinite(rewards))
            if done:
                obs = env.reset()


class TestRewards:
    def test_navigation_all_covered(self):
        cfg = EnvConfig("cooperative_navigation", 3)
        pts = [[-0.5, 0.0], [0.0, 0.5], [0.5, 0.0]]
        assert np.array_equal(reward_cooperative_navigation(make_state(pts, landmarks=pts), cfg), [0.0] * 3)

    def test_navigation_one_landmark_at_distance_one(self):
        cfg = EnvConfig("cooperative_navigation", 2, n_landmarks=2)
        state = make_state([[0.0, 0.0], [0.5, 0.5]], landmarks=[[0.0, 0.0], [0.5, 1.5]])
        np.testing.assert_allclose(reward_cooperative_navigation(state, cfg), [-1.0, -1.0])

    def test_navigation_collision_penalty(self):
        cfg = EnvConfig("cooperative_navigation", 2, n_landmarks=1)
        state = make_state([[0.0, 0.0], [0.05, 0.0]], landmarks=[[0.0, 0.0]])
        np.testing.assert_allclose(reward_cooperative_navigation(state, cfg), [-1.0, -1.0])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(1, 6), l=st.integers(1, 5))
    def test_navigation_brute_force(self, seed, n, l):
        cfg = EnvConfig("cooperative_navigation", n, n_landmarks=l)
        rng = np.random.default_rng(seed)
        state = make_state(rng.uniform(-0.3, 0.3, (n, 2)), landmarks=rng.uniform(-1, 1, (l, 2)))
        r = 0.0
        for lm in state.landmark_pos:
            r -= min(math.dist(lm, a) for a in state.learner_pos)
        for i in range(n):
            for j in range(i + 1, n):
                if math.dist(state.learner_pos[i], state.learner_pos[j]) < 0.1:
                    r -= 1.0
        np.testing.assert_allclose(reward_cooperative_navigation(state, cfg), [r] * n, rtol=1e-12)
        perm = rng.permutation(n)
        state.learner_pos = state.learner_pos[perm]
        np.testing.assert_allclose(reward_cooperative_navigation(state, cfg), [r] * n, rtol=1e-12)

    def test_predator_prey_shaping_only(self):
        cfg = EnvConfig("predator_prey", 2, n_prey=1)
        state = make_state([[0.0, 0.0], [-1.0, 0.0]], prey=[[0.6, 0.0]], landmarks=[[0, 0], [1, 1]])
        np.testing.assert_allclose(reward_predator_prey(state, cfg), [-0.06, -0.06])

    def test_predator_prey_contact_bonus(self):
        cfg = EnvConfig("predator_prey", 2, n_prey=1)
        state = make_state([[0.0, 0.0], [-1.0, 0.0]], prey=[[0.08, 0.0]], landmarks=[[0, 0], [1, 1]])
        np.testing.assert_allclose(reward_predator_prey(state, cfg), [10 - 0.008] * 2)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), n=st.integers(1, 6), m=st.integers(1, 3))
    def test_predator_prey_brute_force(self, seed, n, m):
        cfg = EnvConfig("predator_prey", n, n_prey=m)
        rng = np.random.default_rng(seed)
        state = make_state(rng.uniform(-0.2, 0.2, (n, 2)), prey=rng.uniform(-0.2, 0.2, (m, 2)),
                           landmarks=np.zeros((2, 2)))
        contacts, closest = 0, math.inf
        for a in state.learner_pos:
            for p in state.prey_pos:
                d = math.dist(a, p)
                contacts += d < 0.085
                closest = min(closest, d)
        np.testing.assert_allclose(reward_predator_prey(state, cfg), [10 * contacts - 0.1 * closest] * n, rtol=1e-12)

    def test_scenario_mismatch(self):
        state = make_state([[0, 0]], prey=[[1, 1]], landmarks=[[0, 0]])
        with pytest.raises(ValueError):
            reward_cooperative_navigation(state, EnvConfig("predator_prey", 1))
        with pytest.raises(ValueError):
            reward_predator_prey(state, EnvConfig("cooperative_navigation", 1))

    def test_boundary_penalty_is_a_cost(self):
        pen = boundary_penalty(np.array([[0.5, -0.5], [1.2, 0.0], [-1.5, 1.1]]), 1.0)
        np.testing.assert_allclose(pen, [0.0, -2.0, -6.0])


class TestPrey:
    def cfg(self, n=1):
        return EnvConfig("predator_prey", n, n_prey=1, prey_jitter=0.0)

    def test_flees_left_predator(self):
        state = make_state([[-0.5, 0.0]], prey=[[0.0, 0.0]], landmarks=np.zeros((2, 2)))
        np.testing.assert_allclose(scripted_prey_policy(state, 0, self.cfg(), np.random.default_rng(0)), [1.3, 0.0])

    def test_tie_lowest_index(self):
        state = make_state([[0.0, 0.5], [0.5, 0.0]], prey=[[0.0, 0.0]], landmarks=np.zeros((2, 2)))
        np.testing.assert_allclose(scripted_prey_policy(state, 0, self.cfg(2), np.random.default_rng(0)), [0.0, -1.3])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6))
    def test_pre_jitter_norm(self, seed):
        rng = np.random.default_rng(seed)
        state = make_state(rng.uniform(-1, 1, (3, 2)), prey=rng.uniform(-1, 1, (1, 2)), landmarks=np.zeros((2, 2)))
        assert np.linalg.norm(scripted_prey_policy(state, 0, self.cfg(3), rng)) == pytest.approx(1.3)

    def test_jitter_deterministic(self):
        cfg = EnvConfig("predator_prey", 1, n_prey=1)
        state = make_state([[-0.5, 0.0]], prey=[[0.0, 0.0]], landmarks=np.zeros((2, 2)))
        a = scripted_prey_policy(state, 0, cfg, np.random.default_rng(5))
        b = scripted_prey_policy(state, 0, cfg, np.random.default_rng(5))
        assert np.array_equal(a, b)
