"""Value-based learners over factored action spaces.

DDQN learns one Q-network over the joint action grid. IQL, SAQL and simSDQN
learn one Q-network per action dimension; the sequential kinds (SAQL,
simSDQN) feed each network the actions its predecessors already chose at the
current step, in selection order. Networks of factored agents are indexed by
their position in the selection order, not by dimension.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from src.config import BUFFER_SIZE, EPSILON_END, EXPLORATION_FRACTION, HIDDEN_SIZES, get_hyperparams
from src.envs import BenchmarkKind, BenchmarkSpec, CandidEnv, aggregate_prediction, build_sequential_observation
from src.errors import ConfigError, DomainError, NumericalError
from src.instances import Instance, pl_value
from src.neural import (MLP, TargetPair, forward, init_adam, make_target_pair, mlp_arrays, mlp_from_arrays,
                        mlp_parameter_count, train_step)
from src.replay import Batch, ReplayBuffer
from src.utils import setup_logger

logger = setup_logger("CandidAgents")


class AgentKind(str, Enum):
    DDQN = 'ddqn'
    IQL = 'iql'
    SAQL = 'saql'
    SIMSDQN = 'simsdqn'

    @property
    def factored(self) -> bool:
        return self is not AgentKind.DDQN

    @property
    def sequential(self) -> bool:
        return self in (AgentKind.SAQL, AgentKind.SIMSDQN)


@dataclass(frozen=True)
class Hyperparams:
    lr: float
    gamma: float
    epsilon_start: float
    target_frequency: int
    tau: float
    batch_size: int
    epsilon_end: float = EPSILON_END
    exploration_fraction: float = EXPLORATION_FRACTION
    buffer_size: int = BUFFER_SIZE

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ('epsilon_start', 'epsilon_end', 'tau'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not 0.0 < self.exploration_fraction <= 1.0:
            raise ConfigError(f"exploration_fraction must lie in (0, 1], got {self.exploration_fraction}")
        if self.target_frequency < 1:
            raise ConfigError(f"target_frequency must be >= 1, got {self.target_frequency}")
        if not 1 <= self.batch_size <= self.buffer_size:
            raise ConfigError(f"batch_size must lie in [1, buffer_size={self.buffer_size}], got {self.batch_size}")

    @classmethod
    def published(cls, kind) -> 'Hyperparams':
        return cls(**get_hyperparams(AgentKind(kind).value))

    def as_dict(self) -> dict:
        return asdict(self)


def encode_joint(a: Sequence[int], n_act: Sequence[int]) -> int:
    """Mixed-radix index of a joint action, first dimension most significant."""
    if len(a) != len(n_act):
        raise DomainError(f"joint action {tuple(a)} does not match n_act={tuple(n_act)}")
    try:
        return int(np.ravel_multi_index(tuple(int(v) for v in a), tuple(n_act)))
    except ValueError as e:
        raise DomainError(f"joint action {tuple(a)} out of range: {e}") from None


def decode_joint(index: int, n_act: Sequence[int]) -> Tuple[int, ...]:
    if not 0 <= index < math.prod(n_act):
        raise DomainError(f"joint index {index} outside [0, {math.prod(n_act) - 1}]")
    return tuple(int(v) for v in np.unravel_index(int(index), tuple(n_act)))


def network_sizes(kind, spec: BenchmarkSpec, hidden: Sequence[int] = HIDDEN_SIZES) -> List[Tuple[int, ...]]:
    """Layer sizes of every network an agent of this kind learns."""
    kind = AgentKind(kind)
    if kind is AgentKind.DDQN:
        return [(spec.obs_dim, *hidden, spec.joint_size)]
    sizes = []
    for k, dim in enumerate(spec.selection_order):
        extra = k if kind.sequential else 0
        sizes.append((spec.obs_dim + extra, *hidden, spec.n_act[dim]))
    return sizes


def count_parameters(kind, spec: BenchmarkSpec, hidden: Sequence[int] = HIDDEN_SIZES) -> int:
    return sum(mlp_parameter_count(s) for s in network_sizes(kind, spec, hidden))


def _epsilon_greedy(q: np.ndarray, epsilon: float, rng) -> int:
    if epsilon > 0.0:
        if rng is None:
            raise DomainError("exploration needs a random generator")
        if rng.random() < epsilon:
            return int(rng.integers(q.shape[-1]))
    # argmax breaks ties to the smallest index
    return int(np.argmax(q))


def _double_value(pair: TargetPair, inputs: np.ndarray) -> np.ndarray:
    """Target-network value of the online network's greedy action."""
    greedy = np.argmax(forward(pair.online, inputs), axis=1)
    return forward(pair.target, inputs)[np.arange(inputs.shape[0]), greedy]


class Agent:
    kind: AgentKind

    def __init__(self, spec: BenchmarkSpec, hyperparams: Hyperparams, rng: np.random.Generator,
                 hidden: Sequence[int] = HIDDEN_SIZES):
        self.spec = spec
        self.hp = hyperparams
        self.hidden = tuple(hidden)
        self.networks: List[TargetPair] = [
            make_target_pair(sizes[0], sizes[-1], rng, hyperparams.lr, hyperparams.tau,
                             hyperparams.target_frequency, self.hidden)
            for sizes in network_sizes(self.kind, spec, self.hidden)
        ]

    @property
    def n_params(self) -> int:
        return sum(pair.online.n_params for pair in self.networks)

    def select_action(self, obs: np.ndarray, epsilon: float, rng=None) -> Tuple[int, ...]:
        raise NotImplementedError

    def greedy_actions(self, obs: np.ndarray) -> np.ndarray:
        """Greedy joint actions for a batch of base observations, shape (B, M)."""
        raise NotImplementedError

    def network_batches(self, batch: Batch) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(inputs, action column) each network is regressed on."""
        raise NotImplementedError

    def td_targets(self, batch: Batch) -> List[np.ndarray]:
        raise NotImplementedError

    def _check_batch(self, batch: Batch) -> None:
        n = len(batch)
        if n == 0:
            raise DomainError("empty batch")
        if batch.obs.shape != (n, self.spec.obs_dim) or batch.next_obs.shape != (n, self.spec.obs_dim):
            raise DomainError(f"batch observations must have shape ({n}, {self.spec.obs_dim})")
        if batch.actions.shape != (n, self.spec.dim):
            raise DomainError(f"batch actions must have shape ({n}, {self.spec.dim})")
        if batch.rewards.shape != (n,) or batch.dones.shape != (n,):
            raise DomainError("batch rewards and dones must be vectors")
        if (batch.actions < 0).any() or (batch.actions >= np.asarray(self.spec.n_act)).any():
            raise DomainError("batch holds out-of-range actions")

    def _bootstrap(self, batch: Batch, value: np.ndarray) -> np.ndarray:
        # terminal transitions do not bootstrap
        return batch.rewards + self.hp.gamma * np.where(batch.dones, 0.0, value)

    def update_on(self, batch: Batch) -> float:
        """One gradient step per network against targets computed before any step."""
        targets = self.td_targets(batch)
        losses = [train_step(pair, inputs, actions, target)
                  for pair, (inputs, actions), target in zip(self.networks, self.network_batches(batch), targets)]
        loss = float(np.mean(losses))
        if not np.isfinite(loss):
            raise NumericalError(f"{self.kind.value} loss is not finite ({losses})")
        return loss

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
        return self.update_on(buffer.sample(self.hp.batch_size, rng))


class DDQNAgent(Agent):
    kind = AgentKind.DDQN

    def select_action(self, obs, epsilon, rng=None):
        q = forward(self.networks[0].online, obs)
        return decode_joint(_epsilon_greedy(q, epsilon, rng), self.spec.n_act)

    def greedy_actions(self, obs):
        index = np.argmax(forward(self.networks[0].online, np.atleast_2d(obs)), axis=1)
        return np.stack(np.unravel_index(index, self.spec.n_act), axis=1)

    def network_batches(self, batch):
        return [(batch.obs, np.ravel_multi_index(tuple(batch.actions.T), self.spec.n_act))]

    def td_targets(self, batch):
        self._check_batch(batch)
        return [self._bootstrap(batch, _double_value(self.networks[0], batch.next_obs))]


class FactoredAgent(Agent):
    """One network per dimension; sequential subclasses see predecessor actions."""

    @property
    def order(self) -> Tuple[int, ...]:
        return self.spec.selection_order

    def _inputs(self, obs: np.ndarray, partial: Sequence[int]) -> np.ndarray:
        return build_sequential_observation(obs, partial) if self.kind.sequential else obs

    def _batch_inputs(self, obs: np.ndarray, partial: np.ndarray) -> np.ndarray:
        if not self.kind.sequential or partial.shape[1] == 0:
            return obs
        return np.hstack([obs, partial.astype(float)])

    def select_action(self, obs, epsilon, rng=None):
        joint = [0] * self.spec.dim
        partial: List[int] = []
        for pair, dim in zip(self.networks, self.order):
            a = _epsilon_greedy(forward(pair.online, self._inputs(obs, partial)), epsilon, rng)
            joint[dim] = a
            partial.append(a)
        return tuple(joint)

    def greedy_actions(self, obs):
        obs = np.atleast_2d(obs)
        joint = np.zeros((obs.shape[0], self.spec.dim), dtype=int)
        partial = np.zeros((obs.shape[0], 0), dtype=int)
        for pair, dim in zip(self.networks, self.order):
            a = np.argmax(forward(pair.online, self._batch_inputs(obs, partial)), axis=1)
            joint[:, dim] = a
            partial = np.column_stack([partial, a])
        return joint

    def _ordered_actions(self, actions: np.ndarray) -> np.ndarray:
        return actions[:, list(self.order)]

    def network_batches(self, batch):
        ordered = self._ordered_actions(batch.actions)
        return [(self._batch_inputs(batch.obs, ordered[:, :k]), ordered[:, k]) for k in range(self.spec.dim)]

    def td_targets(self, batch):
        """r + gamma * Q^m_target([s', a'^{1:m-1}], argmax Q^m_online(...)).

        Next-step predecessor actions are rebuilt greedily from the predecessors'
        target networks; without predecessor inputs this is exactly IQL.
        """
        self._check_batch(batch)
        n = len(batch)
        next_partial = np.zeros((n, 0), dtype=int)
        targets = []
        for pair in self.networks:
            inputs = self._batch_inputs(batch.next_obs, next_partial)
            targets.append(self._bootstrap(batch, _double_value(pair, inputs)))
            if self.kind.sequential:
                next_partial = np.column_stack([next_partial, np.argmax(forward(pair.target, inputs), axis=1)])
        return targets


class IQLAgent(FactoredAgent):
    kind = AgentKind.IQL


class SAQLAgent(FactoredAgent):
    kind = AgentKind.SAQL


class SimSDQNAgent(FactoredAgent):
    kind = AgentKind.SIMSDQN

    def td_targets(self, batch):
        """Intermediate networks regress on the next substate's value (no reward,
        no discount); only the last network sees r and bootstraps into the first."""
        self._check_batch(batch)
        ordered = self._ordered_actions(batch.actions)
        last = self.spec.dim - 1
        targets = []
        for k in range(last):
            substate = self._batch_inputs(batch.obs, ordered[:, :k + 1])
            targets.append(forward(self.networks[k + 1].target, substate).max(axis=1))
        targets.append(self._bootstrap(batch, _double_value(self.networks[0], batch.next_obs)))
        return targets


AGENT_CLASSES = {
    AgentKind.DDQN: DDQNAgent,
    AgentKind.IQL: IQLAgent,
    AgentKind.SAQL: SAQLAgent,
    AgentKind.SIMSDQN: SimSDQNAgent,
}


def make_agent(kind, spec: BenchmarkSpec, hyperparams: Hyperparams, rng: np.random.Generator,
               hidden: Sequence[int] = HIDDEN_SIZES) -> Agent:
    try:
        kind = AgentKind(kind)
    except ValueError:
        raise ConfigError(f"unknown algorithm {kind!r}, expected one of {[k.value for k in AgentKind]}") from None
    return AGENT_CLASSES[kind](spec, hyperparams, rng, hidden)


def select_joint_action(agent: Agent, obs: np.ndarray, epsilon: float, rng=None) -> Tuple[int, ...]:
    return agent.select_action(obs, epsilon, rng)


def td_targets(agent: Agent, batch: Batch) -> List[np.ndarray]:
    return agent.td_targets(batch)


def update(agent: Agent, buffer: ReplayBuffer, rng: np.random.Generator) -> float:
    return agent.update(buffer, rng)


@dataclass
class Trajectory:
    actions: List[Tuple[int, ...]] = field(default_factory=list)
    predictions: List[float] = field(default_factory=list)
    targets: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)

    @property
    def episodic_reward(self) -> float:
        return float(sum(self.rewards))


def greedy_trajectory(agent: Agent, env: CandidEnv, inst: Instance) -> Trajectory:
    """Evaluation-mode episode (epsilon = 0), recording what was predicted against what."""
    trajectory = Trajectory()
    obs = env.reset(inst)
    done = False
    while not done:
        t = env.state.t
        action = tuple(int(a) for a in agent.greedy_actions(obs)[0])
        result = env.step(action)
        trajectory.actions.append(action)
        trajectory.predictions.append(aggregate_prediction(env.spec, action))
        trajectory.targets.append(pl_value(inst, t) if env.spec.kind is BenchmarkKind.PL else float('nan'))
        trajectory.rewards.append(result.reward)
        obs, done = result.observation, result.done
    return trajectory


def greedy_rollout(agent: Agent, env: CandidEnv, inst: Instance) -> float:
    return greedy_trajectory(agent, env, inst).episodic_reward


def save_agent(agent: Agent, path) -> None:
    spec = agent.spec
    meta = {
        'kind': agent.kind.value,
        'spec': {
            'kind': spec.kind.value,
            'dim': spec.dim,
            'n_act': list(spec.n_act),
            'importance_decay': spec.importance_decay,
            'c': spec.c,
            'horizon': spec.horizon,
            'order': spec.order.value,
        },
        'hyperparams': agent.hp.as_dict(),
        'hidden': list(agent.hidden),
    }
    arrays = {'meta': np.array(json.dumps(meta))}
    for k, pair in enumerate(agent.networks):
        arrays.update(mlp_arrays(pair.online, prefix=f'net{k}_online_'))
        arrays.update(mlp_arrays(pair.target, prefix=f'net{k}_target_'))
    np.savez(path, **arrays)
    logger.info(f"Saved {agent.kind.value} checkpoint to {path}")


def load_agent(path) -> Agent:
    with np.load(path, allow_pickle=False) as arrays:
        meta = json.loads(str(arrays['meta']))
        spec = BenchmarkSpec(**{**meta['spec'], 'n_act': tuple(meta['spec']['n_act'])})
        agent = make_agent(meta['kind'], spec, Hyperparams(**meta['hyperparams']),
                           np.random.default_rng(0), hidden=meta['hidden'])
        for k, pair in enumerate(agent.networks):
            online: MLP = mlp_from_arrays(arrays, prefix=f'net{k}_online_')
            target: MLP = mlp_from_arrays(arrays, prefix=f'net{k}_target_')
            if online.sizes != pair.online.sizes or target.sizes != pair.target.sizes:
                raise DomainError(f"checkpoint network {k} has sizes {online.sizes}, expected {pair.online.sizes}")
            pair.online, pair.target = online, target
            pair.adam = init_adam(online, agent.hp.lr)
    return agent
