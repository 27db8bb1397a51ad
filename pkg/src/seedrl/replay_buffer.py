"""Bounded FIFO experience store with balanced positive/non-positive sampling.

"Positive" means feedback == +1; neutral and negative transitions are grouped
together, since only +1 gates execution. Batches draw half from each class
(with replacement, uniform within class) whenever both classes are deep
enough; scarce classes are included exhaustively instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .skill_space import MAX_PARAM_DIM


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    skill_one_hot: np.ndarray
    params_padded: np.ndarray
    feedback: int
    affordance: float
    env_reward: float
    next_obs: np.ndarray
    done: bool
    executed: bool

    def __post_init__(self) -> None:
        if self.feedback not in (-1, 0, 1):
            raise ValueError(f"feedback {self.feedback} out of range")
        if not self.executed and not np.array_equal(self.obs, self.next_obs):
            raise ValueError("non-executed transition must keep obs unchanged")


@dataclass(frozen=True)
class BufferStats:
    size: int
    positive_count: int
    capacity: int


@dataclass(frozen=True)
class Batch:
    obs: np.ndarray
    skill_one_hot: np.ndarray
    params_padded: np.ndarray
    feedback: np.ndarray
    affordance: np.ndarray
    env_reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    executed: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]


class _SlotSet:
    """Set of ring slots with O(1) add/remove and O(k) uniform sampling."""

    def __init__(self) -> None:
        self._slots: list[int] = []
        self._where: dict[int, int] = {}

    def __len__(self) -> int:
        return len(self._slots)

    def add(self, slot: int) -> None:
        self._where[slot] = len(self._slots)
        self._slots.append(slot)

    def discard(self, slot: int) -> None:
        idx = self._where.pop(slot, None)
        if idx is None:
            return
        last = self._slots.pop()
        if idx < len(self._slots):
            self._slots[idx] = last
            self._where[last] = idx

    def sample(self, k: int, rng: np.random.Generator) -> np.ndarray:
        picks = rng.integers(0, len(self._slots), size=k)
        return np.fromiter((self._slots[i] for i in picks), dtype=np.int64, count=k)

    def all(self) -> np.ndarray:
        return np.array(self._slots, dtype=np.int64)


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, n_skills: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.skill_one_hot = np.zeros((capacity, n_skills))
        self.params = np.zeros((capacity, MAX_PARAM_DIM))
        self.feedback = np.zeros(capacity, dtype=np.int64)
        self.affordance = np.zeros(capacity)
        self.env_reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.executed = np.zeros(capacity, dtype=bool)
        self._size = 0
        self._next = 0
        self._positive = _SlotSet()
        self._non_positive = _SlotSet()

    def __len__(self) -> int:
        return self._size

    @property
    def stats(self) -> BufferStats:
        return BufferStats(size=self._size, positive_count=len(self._positive),
                           capacity=self.capacity)

    def push(self, t: Transition) -> None:
        slot = self._next
        if self._size == self.capacity:  # evicting the oldest entry
            self._positive.discard(slot)
            self._non_positive.discard(slot)
        self.obs[slot] = t.obs
        self.skill_one_hot[slot] = t.skill_one_hot
        self.params[slot] = t.params_padded
        self.feedback[slot] = t.feedback
        self.affordance[slot] = t.affordance
        self.env_reward[slot] = t.env_reward
        self.next_obs[slot] = t.next_obs
        self.done[slot] = t.done
        self.executed[slot] = t.executed
        (self._positive if t.feedback == 1 else self._non_positive).add(slot)
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _gather(self, slots: np.ndarray) -> Batch:
        return Batch(obs=self.obs[slots], skill_one_hot=self.skill_one_hot[slots],
                     params_padded=self.params[slots], feedback=self.feedback[slots],
                     affordance=self.affordance[slots], env_reward=self.env_reward[slots],
                     next_obs=self.next_obs[slots], done=self.done[slots],
                     executed=self.executed[slots])

    def sample_balanced(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Half positives, half non-positives; scarce classes included once each.

        With no positives at all this degrades to uniform sampling over the
        non-positives (and symmetrically for an all-positive buffer).
        """
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        n_pos, n_non = len(self._positive), len(self._non_positive)
        want_pos = (batch_size + 1) // 2
        want_non = batch_size - want_pos
        if n_pos == 0:
            slots = self._non_positive.sample(batch_size, rng)
        elif n_non == 0:
            slots = self._positive.sample(batch_size, rng)
        elif n_pos < want_pos:
            slots = np.concatenate([self._positive.all(),
                                    self._non_positive.sample(batch_size - n_pos, rng)])
        elif n_non < want_non:
            slots = np.concatenate([self._non_positive.all(),
                                    self._positive.sample(batch_size - n_non, rng)])
        else:
            slots = np.concatenate([self._positive.sample(want_pos, rng),
                                    self._non_positive.sample(want_non, rng)])
        return self._gather(slots)

    def sample_uniform(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self._gather(rng.integers(0, self._size, size=batch_size))

    def dump_jsonl(self, path: str | Path) -> int:
        """Write stored transitions oldest-first, one JSON object per line."""
        path = Path(path)
        start = self._next - self._size
        with path.open("w") as fh:
            for i in range(self._size):
                slot = (start + i) % self.capacity
                fh.write(json.dumps({
                    "obs": self.obs[slot].tolist(),
                    "skill_one_hot": self.skill_one_hot[slot].tolist(),
                    "params": self.params[slot].tolist(),
                    "feedback": int(self.feedback[slot]),
                    "affordance": float(self.affordance[slot]),
                    "env_reward": float(self.env_reward[slot]),
                    "next_obs": self.next_obs[slot].tolist(),
                    "done": bool(self.done[slot]),
                    "executed": bool(self.executed[slot]),
                }) + "\n")
        return self._size
