"""MADDPG, MATD3 and MASAC trainers with decentralized actors and centralized critics.

Every agent owns an actor that sees only its own observation, and one or two
critics that see the concatenated observations and actions of all agents in a
fixed order (obs_1..obs_N, act_1..act_N). Target copies of every network are
tracked by Polyak averaging.

One call to :meth:`TrainerGroup.update_all` is an update round: each agent in
turn samples a joint mini-batch, computes its bootstrap target, takes a critic
step and an actor step; the target networks are then refreshed. Each stage is
charged to its own profiler phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import nn
from .envs import ParticleEnv
from .profiler import PhaseId, PhaseReport
from .replay import BufferSet, JointMinibatch, TransitionRecord, sample_indices

ALGORITHMS = ("maddpg", "matd3", "masac")
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
SQUASH_EPS = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = "maddpg"
    gamma: float = 0.95
    lr: float = 0.01
    batch_size: int = 1024
    tau: float = 0.01
    update_every: int = 100
    buffer_capacity: int = 10**6
    entropy_alpha: float = 0.05
    policy_delay: int = 2
    target_noise_sigma: float = 0.2
    target_noise_clip: float = 0.5
    explore_noise_sigma: float = 0.1
    action_reg: float = 1e-3  # penalty on squared pre-tanh actor outputs (maddpg/matd3)
    hidden_units: int = 64
    hidden_layers: int = 2
    dtype: str = "float64"

    def __post_init__(self):
        checks = [
            ("algorithm", self.algorithm in ALGORITHMS, f"must be one of {', '.join(ALGORITHMS)}"),
            ("gamma", 0.0 <= self.gamma < 1.0, "must be in [0, 1)"),
            ("lr", self.lr > 0, "must be positive"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("tau", 0.0 < self.tau <= 1.0, "must be in (0, 1]"),
            ("update_every", self.update_every >= 1, "must be >= 1"),
            ("buffer_capacity", self.buffer_capacity >= 1, "must be >= 1"),
            ("entropy_alpha", self.entropy_alpha >= 0, "must be >= 0"),
            ("policy_delay", self.policy_delay >= 1, "must be >= 1"),
            ("target_noise_sigma", self.target_noise_sigma >= 0, "must be >= 0"),
            ("target_noise_clip", self.target_noise_clip >= 0, "must be >= 0"),
            ("explore_noise_sigma", self.explore_noise_sigma >= 0, "must be >= 0"),
            ("action_reg", self.action_reg >= 0, "must be >= 0"),
            ("hidden_units", self.hidden_units >= 1, "must be >= 1"),
            ("hidden_layers", self.hidden_layers >= 1, "must be >= 1"),
            ("dtype", self.dtype in ("float64", "float32"), "must be float64 or float32"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ValueError(f"{name} {msg} (got {getattr(self, name)!r})")

    @property
    def n_critics(self) -> int:
        return 1 if self.algorithm == "maddpg" else 2

    @property
    def hidden(self) -> Tuple[int, ...]:
        return (self.hidden_units,) * self.hidden_layers


@dataclass
class UpdateCounters:
    cross_agent_policy_reads: int = 0
    critic_input_dim: int = 0
    buffer_lookups: int = 0
    critic_backprops: int = 0
    actor_backprops: int = 0
    update_rounds: int = 0
    env_steps: int = 0


@dataclass
class RoundSummary:
    round_index: int
    q_losses: List[float]
    p_losses: List[Optional[float]]
    targets_updated: bool


def squashed_gaussian(mean: np.ndarray, log_std: np.ndarray, noise: np.ndarray):
    """tanh-squashed reparameterized sample; returns (action, log_prob[K], pre_tanh)."""
    u = mean + np.exp(log_std) * noise
    a = np.tanh(u)
    logp = (-0.5 * noise**2 - log_std - _HALF_LOG_2PI - np.log(1.0 - a**2 + SQUASH_EPS)).sum(axis=1)
    return a, logp, u


def split_gaussian_head(out: np.ndarray, action_dim: int):
    mean = out[:, :action_dim]
    raw = out[:, action_dim:]
    return mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw


class Trainer:
    """Networks and optimizer state of one agent."""

    def __init__(self, agent_index: int, obs_dim: int, action_dim: int, critic_input_dim: int,
                 config: AlgoConfig, rng: np.random.Generator):
        self.agent_index = agent_index
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.config = config
        dtype = np.dtype(config.dtype)
        if config.algorithm == "masac":
            # mean and log-std heads
            self.actor = nn.init_mlp(obs_dim, 2 * action_dim, "identity", rng, config.hidden, dtype)
        else:
            self.actor = nn.init_mlp(obs_dim, action_dim, "tanh", rng, config.hidden, dtype)
        self.critics = [
            nn.init_mlp(critic_input_dim, 1, "identity", rng, config.hidden, dtype)
            for _ in range(config.n_critics)
        ]
        self.target_actor = self.actor.copy()
        self.target_critics = [c.copy() for c in self.critics]
        self.actor_opt = nn.AdamState.zeros_like(self.actor)
        self.critic_opts = [nn.AdamState.zeros_like(c) for c in self.critics]

    def networks(self):
        """(name, network, optimizer state or None) for every network this agent owns."""
        out = [("actor", self.actor, self.actor_opt), ("target_actor", self.target_actor, None)]
        for k, (c, opt, tc) in enumerate(zip(self.critics, self.critic_opts, self.target_critics)):
            out.append((f"critic{k}", c, opt))
            out.append((f"target_critic{k}", tc, None))
        return out

    def soft_update_targets(self, tau: float) -> None:
        nn.soft_update(self.target_actor, self.actor, tau)
        for tc, c in zip(self.target_critics, self.critics):
            nn.soft_update(tc, c, tau)


class TrainerGroup:
    """All agents' trainers plus the shared update logic and counters."""

    def __init__(self, obs_dims: Sequence[int], action_dim: int, config: AlgoConfig, rng: np.random.Generator):
        self.config = config
        self.obs_dims = list(obs_dims)
        self.action_dim = action_dim
        self.critic_input_dim = sum(self.obs_dims) + len(self.obs_dims) * action_dim
        self.trainers = [
            Trainer(i, d, action_dim, self.critic_input_dim, config, rng) for i, d in enumerate(self.obs_dims)
        ]
        self.counters = UpdateCounters(critic_input_dim=self.critic_input_dim)
        self.gather_workers = 1

    @property
    def n_agents(self) -> int:
        return len(self.trainers)

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    def _action_offset(self, i: int) -> int:
        return sum(self.obs_dims) + i * self.action_dim

    def _critic_input(self, obs: Sequence[np.ndarray], actions: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([*obs, *actions], axis=1)

    # -- acting -----------------------------------------------------------

    def select_actions(self, obs: Sequence[np.ndarray], explore: bool, rng: np.random.Generator) -> np.ndarray:
        """One action per agent from its own actor and its own observation only."""
        if len(obs) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} observations, got {len(obs)}")
        cfg = self.config
        actions = np.empty((self.n_agents, self.action_dim))
        for i, tr in enumerate(self.trainers):
            o = np.asarray(obs[i], dtype=tr.actor.layers[0].weights.dtype).reshape(1, -1)
            if o.shape[1] != tr.obs_dim:
                raise ValueError(f"agent {i}: observation width {o.shape[1]} != {tr.obs_dim}")
            out = nn.predict(tr.actor, o)
            if cfg.algorithm == "masac":
                mean, log_std, _ = split_gaussian_head(out, self.action_dim)
                if explore:
                    a, _, _ = squashed_gaussian(mean, log_std, rng.standard_normal(mean.shape))
                else:
                    a = np.tanh(mean)
            else:
                a = out
                if explore:
                    a = np.clip(a + rng.normal(0.0, cfg.explore_noise_sigma, a.shape), -1.0, 1.0)
            actions[i] = a[0]
        return actions

    # -- update stages ----------------------------------------------------

    def compute_next_actions(self, next_obs: Sequence[np.ndarray], rng: np.random.Generator):
        """Target-actor actions of every agent on its next observation.

        Returns ``(actions, log_probs)``; ``log_probs`` is None except for MASAC,
        whose next actions are fresh samples from the target policies.
        """
        if len(next_obs) != self.n_agents:
            raise ValueError("need one next-observation block per agent")
        actions, logps = [], []
        for j, tr in enumerate(self.trainers):
            if next_obs[j].shape[1] != tr.obs_dim:
                raise ValueError(f"agent {j}: next_obs width {next_obs[j].shape[1]} != {tr.obs_dim}")
            out = nn.predict(tr.target_actor, next_obs[j])
            if self.algorithm == "masac":
                mean, log_std, _ = split_gaussian_head(out, self.action_dim)
                a, lp, _ = squashed_gaussian(mean, log_std, rng.standard_normal(mean.shape))
                actions.append(a)
                logps.append(lp)
            else:
                actions.append(out)
        # the updating agent's own policy read is not a cross-agent read
        self.counters.cross_agent_policy_reads += self.n_agents - 1
        return actions, (logps if self.algorithm == "masac" else None)

    def compute_target_q(self, i: int, rewards: np.ndarray, done: np.ndarray, next_obs: Sequence[np.ndarray],
                         next_actions: Sequence[np.ndarray], next_logp: Optional[Sequence[np.ndarray]],
                         rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        k = rewards.shape[0]
        if done.shape[0] != k or any(x.shape[0] != k for x in (*next_obs, *next_actions)):
            raise ValueError("batch length mismatch")
        if cfg.algorithm == "matd3":
            smoothed = []
            for a in next_actions:
                eps = np.clip(rng.normal(0.0, cfg.target_noise_sigma, a.shape), -cfg.target_noise_clip, cfg.target_noise_clip)
                smoothed.append(np.clip(a + eps, -1.0, 1.0))
            next_actions = smoothed
        x = self._critic_input(next_obs, next_actions)
        q = nn.predict(self.trainers[i].target_critics[0], x)[:, 0]
        for tc in self.trainers[i].target_critics[1:]:
            q = np.minimum(q, nn.predict(tc, x)[:, 0])
        if cfg.algorithm == "masac":
            q = q - cfg.entropy_alpha * next_logp[i]
        y = rewards + cfg.gamma * (1.0 - done) * q
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite target Q value")
        return y

    def update_critic(self, i: int, batch: JointMinibatch, y: np.ndarray) -> float:
        """One Adam step on each of agent ``i``'s critics against ``y``; returns the mean pre-step MSE."""
        tr = self.trainers[i]
        x = self._critic_input(batch.obs, batch.actions)
        if x.shape[1] != self.critic_input_dim:
            raise ValueError(f"critic input width {x.shape[1]} != {self.critic_input_dim}")
        losses = []
        for critic, opt in zip(tr.critics, tr.critic_opts):
            q, cache = nn.forward(critic, x, check=False)
            diff = q[:, 0] - y
            losses.append(float(np.mean(diff**2)))
            grads, _ = nn.backward(critic, cache, 2.0 * diff[:, None], need_input_grad=False)
            nn.adam_step(critic, grads, opt, self.config.lr)
            self.counters.critic_backprops += 1
        return float(np.mean(losses))

    def update_actor(self, i: int, batch: JointMinibatch, rng: np.random.Generator) -> float:
        """One Adam step on agent ``i``'s actor through its first critic (min of twins for MASAC)."""
        cfg = self.config
        tr = self.trainers[i]
        off = self._action_offset(i)
        A = self.action_dim
        out, a_cache = nn.forward(tr.actor, batch.obs[i], check=False)
        if cfg.algorithm == "masac":
            mean, log_std, raw = split_gaussian_head(out, A)
            noise = rng.standard_normal(mean.shape)
            a, logp, _ = squashed_gaussian(mean, log_std, noise)
        else:
            a = out
        actions = list(batch.actions)
        actions[i] = a
        x = self._critic_input(batch.obs, actions)
        k = x.shape[0]

        pre_grad = None
        if cfg.algorithm == "masac":
            q1, c1 = nn.forward(tr.critics[0], x, check=False)
            q2, c2 = nn.forward(tr.critics[1], x, check=False)
            pick1 = (q1 <= q2).astype(x.dtype)
            qmin = np.minimum(q1, q2)[:, 0]
            # d(-qmin)/dx, routed through whichever twin is smaller on each row
            _, g1 = nn.backward(tr.critics[0], c1, -pick1, need_param_grads=False)
            _, g2 = nn.backward(tr.critics[1], c2, -(1.0 - pick1), need_param_grads=False)
            dq_da = (g1 + g2)[:, off:off + A]
            alpha = cfg.entropy_alpha
            sech2 = 1.0 - a**2
            dlogp_du = 2.0 * a * sech2 / (sech2 + SQUASH_EPS)
            dl_du = alpha * dlogp_du + dq_da * sech2
            sigma_eps = np.exp(log_std) * noise
            in_range = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(x.dtype)
            dl_dls = (dl_du * sigma_eps - alpha) * in_range
            out_grad = np.concatenate([dl_du, dl_dls], axis=1)
            loss = float(np.mean(alpha * logp - qmin))
        else:
            q, c_cache = nn.forward(tr.critics[0], x, check=False)
            _, gx = nn.backward(tr.critics[0], c_cache, -np.ones((k, 1), dtype=x.dtype), need_param_grads=False)
            out_grad = gx[:, off:off + A]
            loss = float(-np.mean(q))
            if cfg.action_reg > 0:
                pre = a_cache.pre_output
                loss += cfg.action_reg * float(np.mean(pre**2))
                pre_grad = (2.0 * cfg.action_reg / A) * pre

        grads, _ = nn.backward(tr.actor, a_cache, out_grad, need_input_grad=False, pre_output_grad=pre_grad)
        nn.adam_step(tr.actor, grads, tr.actor_opt, cfg.lr)
        self.counters.actor_backprops += 1
        return loss

    def soft_update_targets(self) -> None:
        for tr in self.trainers:
            tr.soft_update_targets(self.config.tau)

    def _policy_round(self, round_index: int) -> bool:
        if self.algorithm == "matd3":
            return round_index % self.config.policy_delay == 0
        return True

    def update_all(self, buffers: BufferSet, profiler: PhaseReport, rng: np.random.Generator) -> RoundSummary:
        """One update round over all agents."""
        cfg = self.config
        k = cfg.batch_size
        if len(buffers) < k:
            raise RuntimeError(f"buffer underfilled: {len(buffers)} < batch size {k}")
        self.counters.update_rounds += 1
        rnd = self.counters.update_rounds
        policy_round = self._policy_round(rnd)
        q_losses, p_losses = [], []
        for i in range(self.n_agents):
            with profiler.scope(PhaseId.MiniBatchSampling):
                idx = sample_indices(rng, k, len(buffers))
                before = buffers.lookup_counter
                if self.gather_workers > 1:
                    batch = buffers.gather_joint_parallel(idx, self.gather_workers)
                else:
                    batch = buffers.gather_joint(idx)
                self.counters.buffer_lookups += buffers.lookup_counter - before
            with profiler.scope(PhaseId.TargetQCalculation):
                next_actions, next_logp = self.compute_next_actions(batch.next_obs, rng)
                y = self.compute_target_q(i, batch.rewards[i], batch.done[i], batch.next_obs,
                                          next_actions, next_logp, rng)
            with profiler.scope(PhaseId.QLoss):
                q_losses.append(self.update_critic(i, batch, y))
            with profiler.scope(PhaseId.PLoss):
                p_losses.append(self.update_actor(i, batch, rng) if policy_round else None)
        with profiler.scope(PhaseId.TargetUpdate):
            if policy_round:
                self.soft_update_targets()
        return RoundSummary(rnd, q_losses, p_losses, policy_round)

    def param_totals(self) -> Tuple[int, int]:
        actor = sum(nn.param_count(t.actor) for t in self.trainers)
        critic = sum(nn.param_count(c) for t in self.trainers for c in t.critics)
        return actor, critic


@dataclass
class TrainingLog:
    # per-episode reward summed over steps, one column per agent
    episode_rewards: List[List[float]] = field(default_factory=list)
    rounds: List[RoundSummary] = field(default_factory=list)

    def team_rewards(self) -> np.ndarray:
        """Per-episode reward summed over agents."""
        return np.asarray(self.episode_rewards).sum(axis=1)


def run_episode_loop(group: TrainerGroup, env: ParticleEnv, buffers: BufferSet, profiler: PhaseReport,
                     rng: np.random.Generator, n_episodes: int, log: Optional[TrainingLog] = None) -> TrainingLog:
    """Interact, store, and run an update round every ``update_every`` stored steps once warm."""
    cfg = group.config
    n = group.n_agents
    if env.n_agents != n or buffers.n_agents != n:
        raise ValueError("environment, trainers and buffers disagree on agent count")
    if log is None:
        log = TrainingLog()
    for _ in range(n_episodes):
        with profiler.scope(PhaseId.Other):
            obs = env.reset()
            ep_reward = np.zeros(n)
        done = False
        while not done:
            with profiler.scope(PhaseId.ActionSelection):
                actions = group.select_actions(obs, explore=True, rng=rng)
            with profiler.scope(PhaseId.ExperienceCollection):
                next_obs, rewards, done = env.step(actions)
                d = float(done)
                buffers.store_joint([
                    TransitionRecord(obs[a], actions[a], rewards[a], next_obs[a], d) for a in range(n)
                ])
            group.counters.env_steps += 1
            ep_reward += rewards
            obs = next_obs
            if group.counters.env_steps % cfg.update_every == 0 and len(buffers) >= cfg.batch_size:
                log.rounds.append(group.update_all(buffers, profiler, rng))
        with profiler.scope(PhaseId.Other):
            log.episode_rewards.append(ep_reward.tolist())
    return log
