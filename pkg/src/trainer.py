"""Seeded experiment engine: training, evaluation, multi-seed aggregation and
random hyperparameter search.

Every random draw of a run comes from generators spawned off the run's master
seed, so a (RunConfig, seed) pair determines every logged number.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats
from sklearn.model_selection import ParameterSampler

from src.agents import Agent, AgentKind, Hyperparams, make_agent
from src.config import (EPSILON_END, EVAL_INTERVAL, EXPLORATION_FRACTION, HIDDEN_SIZES, HPO_N_CONFIGS, HPO_SEEDS,
                        TEST_INSTANCES, TRAIN_INSTANCES)
from src.envs import BenchmarkSpec, CandidEnv, base_observation, reward
from src.errors import ConfigError, DomainError, TrainingError, WorkbenchError
from src.instances import InstanceSet, load_instances
from src.replay import ReplayBuffer, Transition
from src.utils import CSV_FLOAT_FORMAT, setup_logger, write_csv

logger = setup_logger("CandidTrainer")

METRICS_COLUMNS = ['episode', 'step', 'epsilon', 'train_reward', 'eval_mean', 'eval_std', 'wall_clock']
# wall-clock time varies between reruns and stays out of the CSV
CSV_COLUMNS = METRICS_COLUMNS[:-1]
HYPERPARAM_COLUMNS = ['lr', 'gamma', 'epsilon_start', 'target_frequency', 'tau', 'batch_size']


@dataclass(frozen=True)
class RunConfig:
    spec: BenchmarkSpec
    kind: AgentKind
    hyperparams: Hyperparams
    episodes: int
    eval_interval: int = EVAL_INTERVAL
    seed: int = 0
    train_path: str = TRAIN_INSTANCES
    test_path: str = TEST_INSTANCES
    output_dir: Optional[str] = None
    hidden: Tuple[int, ...] = HIDDEN_SIZES

    def __post_init__(self):
        try:
            object.__setattr__(self, 'kind', AgentKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown algorithm {self.kind!r}") from None
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {self.episodes}")
        if self.eval_interval < 1:
            raise ConfigError(f"eval interval must be >= 1, got {self.eval_interval}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


class MetricsLog:
    """Per-episode training rows; evaluation columns are NaN between scheduled evaluations."""

    def __init__(self, rows: Optional[List[dict]] = None):
        self.rows: List[dict] = list(rows or [])

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, **row) -> None:
        if self.rows and row['episode'] <= self.rows[-1]['episode']:
            raise DomainError(f"episode {row['episode']} does not follow {self.rows[-1]['episode']}")
        self.rows.append({col: row.get(col, np.nan) for col in METRICS_COLUMNS})

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=METRICS_COLUMNS)

    def eval_rows(self) -> pd.DataFrame:
        df = self.frame
        return df[df['eval_mean'].notna()].reset_index(drop=True)

    @property
    def final_eval(self) -> float:
        evals = self.eval_rows()
        return float(evals['eval_mean'].iloc[-1]) if len(evals) else float('nan')

    def to_csv(self, path) -> None:
        write_csv(self.frame[CSV_COLUMNS], path)


def epsilon_at(step: int, total_steps: int, epsilon_start: float, epsilon_end: float = EPSILON_END,
               fraction: float = EXPLORATION_FRACTION) -> float:
    """Linear decay from epsilon_start to epsilon_end over the first `fraction` of steps, constant after."""
    if step < 0:
        raise DomainError(f"step must be >= 0, got {step}")
    decay_steps = fraction * total_steps
    if decay_steps <= 0 or step >= decay_steps:
        return epsilon_end
    return epsilon_start + (epsilon_end - epsilon_start) * (step / decay_steps)


def derive_seed(master: int, seed: int) -> int:
    """Independent per-run seed from a master seed and a seed label."""
    return int(np.random.SeedSequence([int(master), int(seed)]).generate_state(1)[0])


def greedy_returns(agent: Agent, instances: Sequence) -> np.ndarray:
    """Greedy (epsilon = 0) episodic reward on every instance, all episodes stepped together."""
    spec = agent.spec
    env = CandidEnv(spec)
    for inst in instances:
        env.check_instance(inst)
    prev = np.zeros((len(instances), spec.dim), dtype=int)
    totals = np.zeros(len(instances))
    for t in range(spec.horizon):
        obs = np.stack([base_observation(spec, inst, t, p) for inst, p in zip(instances, prev)])
        prev = agent.greedy_actions(obs)
        totals += [reward(spec, inst, t, a) for inst, a in zip(instances, prev)]
    return totals


def evaluate(agent: Agent, test_set: Sequence) -> Tuple[float, float]:
    """Mean and population std of greedy episodic reward over the test set."""
    if len(test_set) == 0:
        raise DomainError("evaluation over an empty test set")
    returns = greedy_returns(agent, list(test_set))
    return float(np.mean(returns)), float(np.std(returns))


def _load_sets(config: RunConfig, train_set, test_set) -> Tuple[InstanceSet, InstanceSet]:
    if train_set is None:
        train_set = load_instances(config.train_path, label='train')
    if test_set is None:
        test_set = load_instances(config.test_path, label='test')
    return train_set, test_set


def train(config: RunConfig, train_set: Optional[InstanceSet] = None,
          test_set: Optional[InstanceSet] = None) -> Tuple[Agent, MetricsLog]:
    train_set, test_set = _load_sets(config, train_set, test_set)
    if len(train_set) == 0:
        raise DomainError("training needs at least one instance")
    spec, hp = config.spec, config.hyperparams
    if config.eval_interval > config.episodes:
        logger.warning(f"eval interval {config.eval_interval} exceeds {config.episodes} episodes, no evaluation will run")

    init_seq, explore_seq, replay_seq = np.random.SeedSequence(config.seed).spawn(3)
    agent = make_agent(config.kind, spec, hp, np.random.default_rng(init_seq), hidden=config.hidden)
    explore_rng = np.random.default_rng(explore_seq)
    replay_rng = np.random.default_rng(replay_seq)
    env = CandidEnv(spec)
    buffer = ReplayBuffer(spec.obs_dim, spec.dim, hp.buffer_size)
    total_steps = config.episodes * spec.horizon

    logger.info(f"Training {config.kind.value} on {spec.kind.value} dim={spec.dim} n_act={spec.n_act} "
                f"for {config.episodes} episodes (seed {config.seed})")
    log = MetricsLog()
    step = 0
    start = time.perf_counter()
    for episode in range(1, config.episodes + 1):
        # round-robin over the training set
        obs = env.reset(train_set[(episode - 1) % len(train_set)])
        episode_reward = 0.0
        done = False
        while not done:
            epsilon = epsilon_at(step, total_steps, hp.epsilon_start, hp.epsilon_end, hp.exploration_fraction)
            action = agent.select_action(obs, epsilon, explore_rng)
            result = env.step(action)
            buffer.push(Transition(obs, action, result.reward, result.observation, result.done))
            episode_reward += result.reward
            obs, done = result.observation, result.done
            step += 1
            if len(buffer) >= hp.batch_size:
                try:
                    agent.update(buffer, replay_rng)
                except WorkbenchError as e:
                    logger.error(f"Update failed at episode {episode}, step {step}: {e}")
                    raise TrainingError(f"seed {config.seed}, episode {episode}, step {step}: {e}",
                                        seed=config.seed) from e

        row = dict(episode=episode, step=step, epsilon=epsilon, train_reward=episode_reward)
        if episode % config.eval_interval == 0:
            row['eval_mean'], row['eval_std'] = evaluate(agent, test_set)
            logger.info(f"Episode {episode}: eval {row['eval_mean']:.4f} +/- {row['eval_std']:.4f}, "
                        f"epsilon {epsilon:.4f}")
        row['wall_clock'] = time.perf_counter() - start
        log.append(**row)

    logger.info(f"Finished {config.kind.value} seed {config.seed}: {step} steps in {time.perf_counter() - start:.1f}s")
    return agent, log


@dataclass
class SeedRun:
    seed: int
    agent: Agent
    log: MetricsLog


@dataclass
class MultiSeedResult:
    runs: List[SeedRun]
    aggregate: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def seeds(self) -> List[int]:
        return [run.seed for run in self.runs]

    @property
    def final_evals(self) -> np.ndarray:
        return np.array([run.log.final_eval for run in self.runs])


def _run_seed(config: RunConfig, seed: int, train_set, test_set) -> SeedRun:
    try:
        agent, log = train(replace(config, seed=derive_seed(config.seed, seed)), train_set, test_set)
    except TrainingError as e:
        raise TrainingError(str(e), seed=seed) from e
    except WorkbenchError as e:
        raise TrainingError(f"seed {seed} failed: {e}", seed=seed) from e
    return SeedRun(seed, agent, log)


def aggregate_curves(logs: Dict[int, MetricsLog]) -> pd.DataFrame:
    """Per-episode mean, population std and median of the evaluation curve across seeds."""
    frames = [log.eval_rows()[['episode', 'eval_mean']].assign(seed=seed) for seed, log in sorted(logs.items())]
    stacked = pd.concat(frames, ignore_index=True)
    grouped = stacked.groupby('episode')['eval_mean']
    return pd.DataFrame({
        'mean': grouped.mean(),
        'std': grouped.std(ddof=0),
        'median': grouped.median(),
    }).reset_index()


def multi_seed(config: RunConfig, seeds: Sequence[int], workers: int = 1,
               train_set: Optional[InstanceSet] = None, test_set: Optional[InstanceSet] = None) -> MultiSeedResult:
    if len(seeds) == 0:
        raise ConfigError("multi_seed needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"duplicate seeds in {list(seeds)}")
    train_set, test_set = _load_sets(config, train_set, test_set)
    ordered = sorted(int(s) for s in seeds)
    try:
        runs = Parallel(n_jobs=workers)(delayed(_run_seed)(config, s, train_set, test_set) for s in ordered)
    except TrainingError as e:
        logger.error(f"Aggregate aborted, seed {e.seed} failed: {e}")
        raise
    result = MultiSeedResult(runs=list(runs))
    result.aggregate = aggregate_curves({run.seed: run.log for run in result.runs})
    logger.info(f"Aggregated {len(ordered)} seeds of {config.kind.value}")
    return result


@dataclass(frozen=True)
class SearchSpace:
    lr: Tuple[float, float] = (1e-5, 1e-3)
    gamma: Tuple[float, float] = (0.9, 0.99)
    epsilon_start: Tuple[float, float] = (0.1, 1.0)
    target_frequency: Tuple[int, int] = (10, 50)
    tau: Tuple[float, float] = (0.1, 0.7)
    batch_size: Tuple[int, int] = (32, 256)

    def __post_init__(self):
        for name in HYPERPARAM_COLUMNS:
            low, high = getattr(self, name)
            if not low < high:
                raise ConfigError(f"search range for {name} is empty: ({low}, {high})")
        if self.lr[0] <= 0:
            raise ConfigError("the learning-rate range must be positive")
        if self.gamma[1] >= 1.0:
            raise ConfigError("gamma must stay below 1")

    def distributions(self) -> dict:
        return {
            'lr': stats.loguniform(*self.lr),
            'gamma': stats.uniform(self.gamma[0], self.gamma[1] - self.gamma[0]),
            'epsilon_start': stats.uniform(self.epsilon_start[0], self.epsilon_start[1] - self.epsilon_start[0]),
            'target_frequency': stats.randint(self.target_frequency[0], self.target_frequency[1] + 1),
            'tau': stats.uniform(self.tau[0], self.tau[1] - self.tau[0]),
            'batch_size': stats.randint(self.batch_size[0], self.batch_size[1] + 1),
        }

    def contains(self, params: dict) -> bool:
        return all(getattr(self, name)[0] <= params[name] <= getattr(self, name)[1] for name in HYPERPARAM_COLUMNS)

    def sample(self, n_configs: int, seed: int) -> List[dict]:
        sampled = ParameterSampler(self.distributions(), n_iter=n_configs, random_state=seed)
        configs = []
        for params in sampled:
            params = {name: float(params[name]) for name in HYPERPARAM_COLUMNS}
            params['target_frequency'] = int(params['target_frequency'])
            params['batch_size'] = int(params['batch_size'])
            configs.append(params)
        return configs


def _final_score(config: RunConfig, train_set, test_set) -> float:
    agent, log = train(config, train_set, test_set)
    if len(log.eval_rows()) and log.eval_rows()['episode'].iloc[-1] == config.episodes:
        return log.final_eval
    return evaluate(agent, test_set)[0]


def random_search(kind, space: SearchSpace, n_configs: int = HPO_N_CONFIGS, seeds: Sequence[int] = range(HPO_SEEDS),
                  base_config: Optional[RunConfig] = None, candidates: Sequence[dict] = (), workers: int = 1,
                  train_set: Optional[InstanceSet] = None, test_set: Optional[InstanceSet] = None) -> pd.DataFrame:
    """Random search ranked by the median final evaluation reward across seeds.

    `candidates` are extra configurations (e.g. the published ones) evaluated
    alongside the sampled ones; they are numbered after them.
    """
    if base_config is None:
        raise ConfigError("random search needs a base run configuration for its budget")
    if n_configs < 0 or (n_configs == 0 and not candidates):
        raise ConfigError(f"nothing to search: n_configs={n_configs}, {len(candidates)} candidates")
    seeds = sorted(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("random search needs at least one seed")
    kind = AgentKind(kind)
    train_set, test_set = _load_sets(base_config, train_set, test_set)

    configs = space.sample(n_configs, base_config.seed) if n_configs else []
    configs += [{name: params[name] for name in HYPERPARAM_COLUMNS} for params in candidates]
    hyperparams = [Hyperparams(**params) for params in configs]
    logger.info(f"Random search over {len(configs)} {kind.value} configurations x {len(seeds)} seeds")

    jobs = [(i, s) for i in range(len(configs)) for s in seeds]
    scores = Parallel(n_jobs=workers)(
        delayed(_final_score)(replace(base_config, kind=kind, hyperparams=hyperparams[i],
                                      seed=derive_seed(base_config.seed, s)), train_set, test_set)
        for i, s in jobs)

    per_config: Dict[int, List[float]] = {i: [] for i in range(len(configs))}
    for (i, _), score in zip(jobs, scores):
        per_config[i].append(float(score))

    rows = []
    for i, params in enumerate(configs):
        median = float(np.median(per_config[i]))
        logger.info(f"Config {i}: median final eval {median:.4f}")
        rows.append({
            'config_id': i,
            **params,
            'median_eval': median,
            'per_seed_evals': ';'.join(CSV_FLOAT_FORMAT % v for v in per_config[i]),
        })
    table = pd.DataFrame(rows, columns=['config_id', *HYPERPARAM_COLUMNS, 'median_eval', 'per_seed_evals'])
    return table.sort_values(['median_eval', 'config_id'], ascending=[False, True], kind='mergesort').reset_index(drop=True)


def save_search(table: pd.DataFrame, path) -> None:
    write_csv(table, path)
    logger.info(f"Saved search table to {path}")
