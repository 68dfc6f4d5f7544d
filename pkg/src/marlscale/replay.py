"""Per-agent ring buffers and the joint mini-batch gather.

Each learner keeps its own buffer. Transitions are inserted for all agents at
once, so the buffers stay index-aligned and one index batch drawn by the
updating agent selects a coherent joint transition across all of them.

The default ``record`` gather reads one stored transition at a time
(lookup, read, write into the output batch). This reproduces the access
pattern of reference MARL codebases, where sampling dominates update cost.
``vectorized`` mode does the same reads with numpy fancy indexing and is kept
for contrast.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

DEFAULT_CAPACITY = 10**6
GATHER_MODES = ("record", "vectorized")
_INITIAL_ALLOC = 4096


class TransitionRecord(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    done: float


class AgentBuffer:
    """Fixed-capacity ring buffer with one contiguous array per field.

    Storage grows geometrically up to ``capacity`` so that a 10**6 buffer
    does not allocate gigabytes for a short run.
    """

    def __init__(self, obs_dim: int, action_dim: int, capacity: int = DEFAULT_CAPACITY, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.capacity = capacity
        self.dtype = np.dtype(dtype)
        self.write_cursor = 0
        self.length = 0
        self._alloc(min(capacity, _INITIAL_ALLOC))

    def _alloc(self, size: int) -> None:
        old = getattr(self, "obs", None)
        obs = np.zeros((size, self.obs_dim), self.dtype)
        action = np.zeros((size, self.action_dim), self.dtype)
        reward = np.zeros(size, self.dtype)
        next_obs = np.zeros((size, self.obs_dim), self.dtype)
        done = np.zeros(size, self.dtype)
        if old is not None:
            n = self.length
            obs[:n] = self.obs[:n]
            action[:n] = self.action[:n]
            reward[:n] = self.reward[:n]
            next_obs[:n] = self.next_obs[:n]
            done[:n] = self.done[:n]
        self.obs, self.action, self.reward, self.next_obs, self.done = obs, action, reward, next_obs, done

    def __len__(self) -> int:
        return self.length

    def add(self, record: TransitionRecord) -> None:
        i = self.write_cursor
        if i >= self.obs.shape[0]:
            # only reachable before the first wrap, while length == cursor
            self._alloc(min(self.capacity, 2 * self.obs.shape[0]))
        self.obs[i] = record.obs
        self.action[i] = record.action
        self.reward[i] = record.reward
        self.next_obs[i] = record.next_obs
        self.done[i] = record.done
        self.write_cursor = (i + 1) % self.capacity
        self.length = min(self.length + 1, self.capacity)

    def record(self, index: int) -> TransitionRecord:
        """Stored transition at physical slot ``index``."""
        if not 0 <= index < self.length:
            raise IndexError(index)
        return TransitionRecord(
            self.obs[index].copy(),
            self.action[index].copy(),
            float(self.reward[index]),
            self.next_obs[index].copy(),
            float(self.done[index]),
        )

    def ordered(self) -> List[TransitionRecord]:
        """Contents from oldest to newest."""
        start = self.write_cursor if self.length == self.capacity else 0
        return [self.record((start + k) % self.capacity) for k in range(self.length)]


@dataclass
class JointMinibatch:
    obs: List[np.ndarray]  # per agent [K x d_i]
    actions: List[np.ndarray]
    rewards: List[np.ndarray]  # per agent [K]
    next_obs: List[np.ndarray]
    done: List[np.ndarray]

    @property
    def size(self) -> int:
        return self.rewards[0].shape[0]


def sample_indices(rng: np.random.Generator, k: int, length: int) -> np.ndarray:
    """``k`` uniform draws from ``[0, length)``, with replacement."""
    if length <= 0:
        raise ValueError("cannot sample from an empty buffer")
    return rng.integers(0, length, size=k)


class BufferSet:
    """One :class:`AgentBuffer` per learner plus a lookup counter."""

    def __init__(
        self,
        obs_dims: Sequence[int],
        action_dim: int,
        capacity: int = DEFAULT_CAPACITY,
        dtype=np.float64,
        gather_mode: str = "record",
    ):
        if gather_mode not in GATHER_MODES:
            raise ValueError(f"gather_mode must be one of {GATHER_MODES}")
        self.buffers = [AgentBuffer(d, action_dim, capacity, dtype) for d in obs_dims]
        self.gather_mode = gather_mode
        self.lookup_counter = 0

    @property
    def n_agents(self) -> int:
        return len(self.buffers)

    def __len__(self) -> int:
        return len(self.buffers[0])

    def store_joint(self, records: Sequence[TransitionRecord]) -> None:
        if len(records) != len(self.buffers):
            raise ValueError(f"expected {len(self.buffers)} records, got {len(records)}")
        for buf, rec in zip(self.buffers, records):
            buf.add(rec)

    def _empty_batch(self, k: int) -> JointMinibatch:
        bufs = self.buffers
        return JointMinibatch(
            [np.empty((k, b.obs_dim), b.dtype) for b in bufs],
            [np.empty((k, b.action_dim), b.dtype) for b in bufs],
            [np.empty(k, b.dtype) for b in bufs],
            [np.empty((k, b.obs_dim), b.dtype) for b in bufs],
            [np.empty(k, b.dtype) for b in bufs],
        )

    def _check(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        if indices.size and (indices.min() < 0 or indices.max() >= len(self)):
            raise IndexError(f"index out of range for buffer length {len(self)}")
        return indices

    def _fill(self, out: JointMinibatch, indices: np.ndarray, lo: int, hi: int) -> None:
        if self.gather_mode == "vectorized":
            sel = indices[lo:hi]
            for a, buf in enumerate(self.buffers):
                out.obs[a][lo:hi] = buf.obs[sel]
                out.actions[a][lo:hi] = buf.action[sel]
                out.rewards[a][lo:hi] = buf.reward[sel]
                out.next_obs[a][lo:hi] = buf.next_obs[sel]
                out.done[a][lo:hi] = buf.done[sel]
            return
        rows = indices[lo:hi].tolist()
        for a, buf in enumerate(self.buffers):
            o, ac, r, no, d = out.obs[a], out.actions[a], out.rewards[a], out.next_obs[a], out.done[a]
            b_o, b_ac, b_r, b_no, b_d = buf.obs, buf.action, buf.reward, buf.next_obs, buf.done
            for j, i in enumerate(rows, start=lo):
                o[j] = b_o[i]
                ac[j] = b_ac[i]
                r[j] = b_r[i]
                no[j] = b_no[i]
                d[j] = b_d[i]

    def gather_joint(self, indices: np.ndarray) -> JointMinibatch:
        """Read the same ``indices`` from every agent's buffer.

        Adds ``N * K`` to :attr:`lookup_counter`.
        """
        indices = self._check(indices)
        out = self._empty_batch(indices.size)
        self._fill(out, indices, 0, indices.size)
        self.lookup_counter += self.n_agents * indices.size
        return out

    def gather_joint_parallel(self, indices: np.ndarray, workers: int) -> JointMinibatch:
        """Same result as :meth:`gather_joint`, split over ``workers`` threads by output row range."""
        if workers < 1:
            raise ValueError("workers must be >= 1")
        indices = self._check(indices)
        k = indices.size
        out = self._empty_batch(k)
        if workers == 1 or k < 2:
            self._fill(out, indices, 0, k)
        else:
            bounds = np.linspace(0, k, min(workers, k) + 1).astype(int)
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(self._fill, out, indices, lo, hi)
                    for lo, hi in zip(bounds[:-1], bounds[1:])
                    if hi > lo
                ]
                for f in futures:
                    f.result()
        self.lookup_counter += self.n_agents * k
        return out
