from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.config import BUFFER_SIZE
from src.errors import DomainError, InsufficientDataError


@dataclass(frozen=True, eq=False)
class Transition:
    """One environment step over base observations (no per-agent views)."""
    obs: np.ndarray
    action: Tuple[int, ...]
    reward: float
    next_obs: np.ndarray
    done: bool

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (np.array_equal(self.obs, other.obs) and tuple(self.action) == tuple(other.action)
                and self.reward == other.reward and np.array_equal(self.next_obs, other.next_obs)
                and bool(self.done) == bool(other.done))


@dataclass(frozen=True)
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    dones: np.ndarray

    def __len__(self) -> int:
        return self.obs.shape[0]

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> 'Batch':
        return cls(
            obs=np.stack([tr.obs for tr in transitions]).astype(float),
            actions=np.array([tr.action for tr in transitions], dtype=int),
            rewards=np.array([tr.reward for tr in transitions], dtype=float),
            next_obs=np.stack([tr.next_obs for tr in transitions]).astype(float),
            dones=np.array([tr.done for tr in transitions], dtype=bool),
        )


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions, sampled uniformly without replacement."""

    def __init__(self, obs_dim: int, action_dim: int, capacity: int = BUFFER_SIZE):
        if capacity < 1:
            raise DomainError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim), dtype=int)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.fill = 0

    def __len__(self) -> int:
        return self.fill

    def push(self, transition: Transition) -> None:
        if not np.isfinite(transition.reward):
            raise DomainError(f"non-finite reward {transition.reward}")
        i = self.cursor
        self.obs[i] = transition.obs
        self.actions[i] = transition.action
        self.rewards[i] = transition.reward
        self.next_obs[i] = transition.next_obs
        self.dones[i] = transition.done
        self.cursor = (self.cursor + 1) % self.capacity
        self.fill = min(self.fill + 1, self.capacity)

    def _slot(self, index: int) -> int:
        # index 0 is the oldest stored transition
        if not -self.fill <= index < self.fill:
            raise IndexError(f"index {index} outside a buffer of {self.fill}")
        index %= self.fill
        return (self.cursor - self.fill + index) % self.capacity

    def __getitem__(self, index: int) -> Transition:
        i = self._slot(index)
        return Transition(
            obs=self.obs[i].copy(),
            action=tuple(int(a) for a in self.actions[i]),
            reward=float(self.rewards[i]),
            next_obs=self.next_obs[i].copy(),
            done=bool(self.dones[i]),
        )

    def sample_slots(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size < 1:
            raise DomainError(f"batch size must be >= 1, got {batch_size}")
        if self.fill < batch_size:
            raise InsufficientDataError(f"buffer holds {self.fill} transitions, batch needs {batch_size}")
        return rng.choice(self.fill, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        slots = self.sample_slots(batch_size, rng)
        return Batch(
            obs=self.obs[slots].copy(),
            actions=self.actions[slots].copy(),
            rewards=self.rewards[slots].copy(),
            next_obs=self.next_obs[slots].copy(),
            dones=self.dones[slots].copy(),
        )


def push(buffer: ReplayBuffer, transition: Transition) -> None:
    buffer.push(transition)


def sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch_size, rng)
