"""Two-dimensional particle worlds: predator-prey and cooperative navigation.

Learners are point masses driven by bounded acceleration commands. Prey
(predator-prey only) follow a scripted flee policy. Landmarks are static.
Observation width grows with the number of learners, which is what makes the
centralized critic input grow quadratically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

SCENARIOS = ("predator_prey", "cooperative_navigation")
ACTION_DIM = 2

CONTACT_BONUS = 10.0
DISTANCE_SHAPING = 0.1
COLLISION_PENALTY = 1.0
BOUNDARY_PENALTY = 10.0


@dataclass(frozen=True)
class EnvConfig:
    scenario: str = "predator_prey"
    n_learners: int = 3
    n_prey: Optional[int] = None  # None -> ceil(N/3) for predator_prey
    n_landmarks: Optional[int] = None  # None -> 2 (predator_prey) or N (navigation)
    dt: float = 0.1
    damping: float = 0.25
    max_episode_len: int = 25
    world_half_width: float = 1.0
    accel_scale: float = 5.0
    learner_max_speed: float = 1.0
    prey_max_speed: float = 1.3
    learner_radius: float = 0.05
    prey_radius: float = 0.035
    landmark_radius: float = 0.05
    prey_speed_factor: float = 1.3
    prey_jitter: float = 0.05

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; valid scenarios: {', '.join(SCENARIOS)}")
        if self.n_learners < 1:
            raise ValueError("n_learners must be positive")
        if self.n_prey is None:
            n_prey = math.ceil(self.n_learners / 3) if self.scenario == "predator_prey" else 0
            object.__setattr__(self, "n_prey", n_prey)
        if self.n_landmarks is None:
            n_lm = 2 if self.scenario == "predator_prey" else self.n_learners
            object.__setattr__(self, "n_landmarks", n_lm)
        if self.scenario == "predator_prey" and self.n_prey < 1:
            raise ValueError("predator_prey needs n_prey >= 1")
        if self.scenario == "cooperative_navigation":
            if self.n_prey != 0:
                raise ValueError("cooperative_navigation has no prey (n_prey must be 0)")
            if self.n_landmarks < 1:
                raise ValueError("cooperative_navigation needs n_landmarks >= 1")
        if self.n_landmarks < 0 or self.max_episode_len < 1 or self.dt <= 0:
            raise ValueError("invalid environment constants")


@dataclass
class WorldState:
    learner_pos: np.ndarray
    learner_vel: np.ndarray
    prey_pos: np.ndarray
    prey_vel: np.ndarray
    landmark_pos: np.ndarray
    step_index: int = 0

    def copy(self) -> "WorldState":
        return WorldState(
            self.learner_pos.copy(),
            self.learner_vel.copy(),
            self.prey_pos.copy(),
            self.prey_vel.copy(),
            self.landmark_pos.copy(),
            self.step_index,
        )


def obs_dim(n_learners: int, n_landmarks: int, n_prey: int) -> int:
    return 4 + 2 * n_landmarks + 4 * (n_learners - 1) + 4 * n_prey


def space_dims(config: EnvConfig) -> Tuple[int, int, int]:
    """(per-agent observation width, per-agent action width, critic input width)."""
    d = obs_dim(config.n_learners, config.n_landmarks, config.n_prey)
    return d, ACTION_DIM, config.n_learners * (d + ACTION_DIM)


def reset(config: EnvConfig, rng: np.random.Generator) -> Tuple[WorldState, np.ndarray]:
    w = config.world_half_width
    n, m, l = config.n_learners, config.n_prey, config.n_landmarks
    state = WorldState(
        learner_pos=rng.uniform(-w, w, size=(n, 2)),
        learner_vel=np.zeros((n, 2)),
        prey_pos=rng.uniform(-w, w, size=(m, 2)),
        prey_vel=np.zeros((m, 2)),
        landmark_pos=rng.uniform(-w, w, size=(l, 2)),
    )
    return state, observe_all(state, config)


def observe(state: WorldState, agent_index: int, config: EnvConfig) -> np.ndarray:
    """Observation of one learner.

    Layout: own velocity, own position, landmarks relative to self, other
    learners' relative positions, other learners' velocities, prey relative
    positions, prey velocities.
    """
    n = config.n_learners
    if not 0 <= agent_index < n:
        raise IndexError(f"agent_index {agent_index} out of range for {n} learners")
    pos = state.learner_pos[agent_index]
    others = [j for j in range(n) if j != agent_index]
    parts = [
        state.learner_vel[agent_index],
        pos,
        (state.landmark_pos - pos).ravel(),
        (state.learner_pos[others] - pos).ravel(),
        state.learner_vel[others].ravel(),
        (state.prey_pos - pos).ravel(),
        state.prey_vel.ravel(),
    ]
    return np.concatenate(parts)


def observe_all(state: WorldState, config: EnvConfig) -> np.ndarray:
    """Observations of every learner stacked as [N x obs_dim]; same layout as :func:`observe`."""
    n = config.n_learners
    pos, vel = state.learner_pos, state.learner_vel
    # mask selecting the N-1 "other" rows for each agent, in index order
    others = ~np.eye(n, dtype=bool)
    rel_learners = (pos[None, :, :] - pos[:, None, :])[others].reshape(n, 2 * (n - 1))
    other_vel = np.broadcast_to(vel, (n, n, 2))[others].reshape(n, 2 * (n - 1))
    rel_lm = (state.landmark_pos[None, :, :] - pos[:, None, :]).reshape(n, -1)
    rel_prey = (state.prey_pos[None, :, :] - pos[:, None, :]).reshape(n, -1)
    prey_vel = np.broadcast_to(state.prey_vel.ravel(), (n, 2 * config.n_prey))
    return np.concatenate([vel, pos, rel_lm, rel_learners, other_vel, rel_prey, prey_vel], axis=1)


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))


def reward_cooperative_navigation(state: WorldState, config: EnvConfig) -> np.ndarray:
    """Shared reward: minus the summed landmark-to-nearest-agent distance, minus 1 per colliding pair."""
    if config.scenario != "cooperative_navigation":
        raise ValueError("reward_cooperative_navigation needs the cooperative_navigation scenario")
    n = config.n_learners
    coverage = _pairwise_dist(state.landmark_pos, state.learner_pos).min(axis=1).sum()
    d = _pairwise_dist(state.learner_pos, state.learner_pos)
    iu = np.triu_indices(n, k=1)
    collisions = int((d[iu] < 2 * config.learner_radius).sum())
    r = -coverage - COLLISION_PENALTY * collisions
    return np.full(n, r)


def reward_predator_prey(state: WorldState, config: EnvConfig) -> np.ndarray:
    """Shared team reward for predators: +10 per predator-prey contact, minus 0.1 x closest predator-prey gap."""
    if config.scenario != "predator_prey":
        raise ValueError("reward_predator_prey needs the predator_prey scenario")
    d = _pairwise_dist(state.learner_pos, state.prey_pos)
    contacts = int((d < config.learner_radius + config.prey_radius).sum())
    r = CONTACT_BONUS * contacts - DISTANCE_SHAPING * d.min()
    return np.full(config.n_learners, r)


def boundary_penalty(pos: np.ndarray, half_width: float) -> np.ndarray:
    """Per-learner soft wall penalty, linear in the distance beyond the wall on each axis."""
    excess = np.maximum(0.0, np.abs(pos) - half_width)
    return -BOUNDARY_PENALTY * excess.sum(axis=1)


def scripted_prey_policy(
    state: WorldState, prey_index: int, config: EnvConfig, rng: np.random.Generator
) -> np.ndarray:
    """Flee the nearest predator (lowest index on ties) at ``prey_speed_factor``, plus Gaussian jitter."""
    me = state.prey_pos[prey_index]
    away = me - state.learner_pos
    dist = np.sqrt((away**2).sum(axis=1))
    nearest = int(np.argmin(dist))  # argmin returns the first minimum
    if dist[nearest] > 0:
        direction = away[nearest] / dist[nearest]
    else:
        direction = np.array([1.0, 0.0])
    return config.prey_speed_factor * direction + rng.normal(0.0, config.prey_jitter, size=2)


def _integrate(pos, vel, accel, config: EnvConfig, max_speed: float):
    vel = (1.0 - config.damping) * vel + accel * config.accel_scale * config.dt
    speed = np.sqrt((vel**2).sum(axis=1, keepdims=True))
    too_fast = speed > max_speed
    if too_fast.any():
        vel = np.where(too_fast, vel / np.where(too_fast, speed, 1.0) * max_speed, vel)
    return pos + vel * config.dt, vel


def step(
    state: WorldState, actions: np.ndarray, config: EnvConfig, rng: np.random.Generator
) -> Tuple[WorldState, np.ndarray, np.ndarray, bool]:
    """Advance one tick. Returns (next_state, rewards[N], observations[N x d], done)."""
    if state.step_index >= config.max_episode_len:
        raise RuntimeError("episode already finished; call reset()")
    actions = np.clip(np.asarray(actions, dtype=float).reshape(config.n_learners, ACTION_DIM), -1.0, 1.0)
    prey_accel = np.array(
        [scripted_prey_policy(state, k, config, rng) for k in range(config.n_prey)]
    ).reshape(config.n_prey, 2)
    lpos, lvel = _integrate(state.learner_pos, state.learner_vel, actions, config, config.learner_max_speed)
    ppos, pvel = _integrate(state.prey_pos, state.prey_vel, prey_accel, config, config.prey_max_speed)
    nxt = WorldState(lpos, lvel, ppos, pvel, state.landmark_pos, state.step_index + 1)
    if config.scenario == "predator_prey":
        rewards = reward_predator_prey(nxt, config)
    else:
        rewards = reward_cooperative_navigation(nxt, config)
    rewards = rewards + boundary_penalty(lpos, config.world_half_width)
    done = nxt.step_index == config.max_episode_len
    return nxt, rewards, observe_all(nxt, config), done


@dataclass
class ParticleEnv:
    """Stateful convenience wrapper around :func:`reset` / :func:`step`."""

    config: EnvConfig
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    state: Optional[WorldState] = None

    @property
    def n_agents(self) -> int:
        return self.config.n_learners

    def reset(self) -> np.ndarray:
        self.state, obs = reset(self.config, self.rng)
        return obs

    def step(self, actions: np.ndarray):
        self.state, rewards, obs, done = step(self.state, actions, self.config, self.rng)
        return obs, rewards, done

