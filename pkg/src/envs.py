"""Contextual-MDP environments for the Piecewise Linear and Sigmoid benchmarks.

Observations are raw float vectors laid out as
``[T - t, <instance features>, a^1_{t-1}, ..., a^M_{t-1}]``; PL instances
contribute ``(x, y, b)``, Sigmoid instances their flattened (shift, slope) pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.config import DEFAULT_C, DEFAULT_HORIZON, DEFAULT_IMPORTANCE_DECAY, MAX_JOINT_ACTIONS, PL_X_MAX
from src.errors import CapacityError, ConfigError, DomainError, StateError
from src.instances import Instance, PLInstance, SigmoidInstance, pl_value


class BenchmarkKind(str, Enum):
    PL = 'pl'
    SIGMOID = 'sigmoid'


class SelectionOrder(str, Enum):
    DESCENDING = 'descending'
    REVERSED = 'reversed'


@dataclass(frozen=True)
class BenchmarkSpec:
    kind: BenchmarkKind = BenchmarkKind.PL
    dim: int = 2
    n_act: Tuple[int, ...] = (3, 3)
    importance_decay: float = DEFAULT_IMPORTANCE_DECAY
    c: float = DEFAULT_C
    horizon: int = DEFAULT_HORIZON
    order: SelectionOrder = SelectionOrder.DESCENDING

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', BenchmarkKind(self.kind))
            object.__setattr__(self, 'order', SelectionOrder(self.order))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        object.__setattr__(self, 'n_act', tuple(int(n) for n in self.n_act))
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if len(self.n_act) != self.dim:
            raise ConfigError(f"n_act has {len(self.n_act)} entries for dim={self.dim}")
        if any(n < 2 for n in self.n_act):
            raise ConfigError(f"every dimension needs n_act >= 2, got {self.n_act}")
        if not 0.0 < self.importance_decay <= 1.0:
            raise ConfigError(f"importance decay lambda must lie in (0, 1], got {self.importance_decay}")
        if not self.c > 0:
            raise ConfigError(f"reward sharpness c must be > 0, got {self.c}")
        if self.horizon < 1:
            raise ConfigError(f"horizon T must be >= 1, got {self.horizon}")
        if self.kind is BenchmarkKind.PL and self.horizon - 1 > PL_X_MAX:
            raise ConfigError(f"PL targets are defined for t <= {PL_X_MAX:g}, horizon {self.horizon} is too long")

    @classmethod
    def uniform(cls, kind='pl', dim=2, n_act=3, **kwargs) -> 'BenchmarkSpec':
        return cls(kind=kind, dim=dim, n_act=(n_act,) * dim, **kwargs)

    @property
    def joint_size(self) -> int:
        return math.prod(self.n_act)

    @property
    def instance_features(self) -> int:
        return 3 if self.kind is BenchmarkKind.PL else 2 * self.dim

    @property
    def obs_dim(self) -> int:
        return 1 + self.instance_features + self.dim

    @property
    def selection_order(self) -> Tuple[int, ...]:
        """Dimension indices (0-based) in the order sequential policies choose them."""
        dims = tuple(range(self.dim))
        return dims[::-1] if self.order is SelectionOrder.REVERSED else dims


@dataclass
class EnvState:
    instance: Instance
    t: int = 0
    prev_actions: Tuple[int, ...] = ()


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool


def _check_action(spec: BenchmarkSpec, a) -> Tuple[int, ...]:
    a = tuple(int(v) for v in a)
    if len(a) != spec.dim:
        raise DomainError(f"joint action {a} has {len(a)} components, expected {spec.dim}")
    for m, (v, n) in enumerate(zip(a, spec.n_act)):
        if not 0 <= v < n:
            raise DomainError(f"action component {m + 1} = {v} outside [0, {n - 1}]")
    return a


def weight(spec: BenchmarkSpec, m: int) -> float:
    """Weight w_m = lambda^(m-1) of dimension m (1-based, m >= 2)."""
    if not 2 <= m <= spec.dim:
        raise DomainError(f"weights are defined for 2 <= m <= {spec.dim}, got m={m}")
    return spec.importance_decay ** (m - 1)


def _weights(spec: BenchmarkSpec) -> np.ndarray:
    # position 0 carries the first dimension's full scale, others are centered
    return np.array([1.0] + [spec.importance_decay ** (m - 1) for m in range(2, spec.dim + 1)])


def joint_grid(spec: BenchmarkSpec) -> np.ndarray:
    """Every joint action, mixed-radix ordered with the first dimension most significant."""
    if spec.joint_size > MAX_JOINT_ACTIONS:
        raise CapacityError(f"joint grid of {spec.joint_size} actions exceeds {MAX_JOINT_ACTIONS}")
    return np.indices(spec.n_act).reshape(spec.dim, -1).T


def predictions(spec: BenchmarkSpec, actions: np.ndarray) -> np.ndarray:
    """Vectorized aggregate prediction over rows of joint actions."""
    scaled = np.atleast_2d(actions) / (np.asarray(spec.n_act, dtype=float) - 1.0)
    centered = scaled.copy()
    centered[:, 1:] -= 0.5
    return centered @ _weights(spec)


def aggregate_prediction(spec: BenchmarkSpec, a: Sequence[int]) -> float:
    a = _check_action(spec, a)
    total = a[0] / (spec.n_act[0] - 1)
    for m in range(2, spec.dim + 1):
        total += weight(spec, m) * (a[m - 1] / (spec.n_act[m - 1] - 1) - 0.5)
    return total


def rewards(spec: BenchmarkSpec, inst: Instance, t: int, actions: np.ndarray) -> np.ndarray:
    """Step rewards for every row of `actions` at time step t."""
    actions = np.atleast_2d(actions)
    if spec.kind is BenchmarkKind.PL:
        return np.exp(-spec.c * np.abs(predictions(spec, actions) - pl_value(inst, t)))
    curves = expit(np.asarray(inst.slopes) * (t - np.asarray(inst.shifts)))
    errors = np.abs(curves - actions / (np.asarray(spec.n_act, dtype=float) - 1.0))
    return np.prod(1.0 - errors, axis=1)


def pl_reward(spec: BenchmarkSpec, inst: PLInstance, t: int, a: Sequence[int]) -> float:
    error = abs(aggregate_prediction(spec, a) - pl_value(inst, t))
    return math.exp(-spec.c * error)


def sigmoid_reward(spec: BenchmarkSpec, inst: SigmoidInstance, t: int, a: Sequence[int]) -> float:
    a = _check_action(spec, a)
    if inst.dim != spec.dim:
        raise DomainError(f"Sigmoid instance has {inst.dim} curves, benchmark has dim={spec.dim}")
    reward = 1.0
    for m in range(spec.dim):
        target = float(expit(inst.slopes[m] * (t - inst.shifts[m])))
        reward *= 1.0 - abs(target - a[m] / (spec.n_act[m] - 1))
    return reward


def reward(spec: BenchmarkSpec, inst: Instance, t: int, a: Sequence[int]) -> float:
    if spec.kind is BenchmarkKind.PL:
        return pl_reward(spec, inst, t, a)
    return sigmoid_reward(spec, inst, t, a)


def base_observation(spec: BenchmarkSpec, inst: Instance, t: int, prev_actions: Sequence[int]) -> np.ndarray:
    return np.array([spec.horizon - t, *inst.features(), *prev_actions], dtype=float)


def build_sequential_observation(base: np.ndarray, partial: Sequence[int]) -> np.ndarray:
    """Appends the current step's predecessor actions to a base observation."""
    if len(partial) == 0:
        return base
    return np.concatenate([base, np.asarray(partial, dtype=float)])


class CandidEnv:
    def __init__(self, spec: BenchmarkSpec):
        self.spec = spec
        self.state: Optional[EnvState] = None

    def check_instance(self, inst: Instance):
        if self.spec.kind is BenchmarkKind.PL and not isinstance(inst, PLInstance):
            raise DomainError("the PL benchmark needs PL instances")
        if self.spec.kind is BenchmarkKind.SIGMOID:
            if not isinstance(inst, SigmoidInstance):
                raise DomainError("the Sigmoid benchmark needs Sigmoid instances")
            if inst.dim != self.spec.dim:
                raise DomainError(f"Sigmoid instance has {inst.dim} curves, benchmark has dim={self.spec.dim}")

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.t >= self.spec.horizon

    @property
    def observation(self) -> np.ndarray:
        if self.state is None:
            raise StateError("environment has not been reset")
        return base_observation(self.spec, self.state.instance, self.state.t, self.state.prev_actions)

    def reset(self, inst: Instance) -> np.ndarray:
        self.check_instance(inst)
        self.state = EnvState(instance=inst, t=0, prev_actions=(0,) * self.spec.dim)
        return self.observation

    def step(self, action: Sequence[int]) -> StepResult:
        if self.state is None:
            raise StateError("step() called before reset()")
        if self.done:
            raise StateError("step() called after the episode finished")
        action = _check_action(self.spec, action)
        r = reward(self.spec, self.state.instance, self.state.t, action)
        self.state.t += 1
        self.state.prev_actions = action
        return StepResult(observation=self.observation, reward=r, done=self.done)


def reset(env: CandidEnv, inst: Instance) -> np.ndarray:
    return env.reset(inst)


def step(env: CandidEnv, action: Sequence[int]) -> StepResult:
    return env.step(action)
