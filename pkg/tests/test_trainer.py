import os
import tempfile
import unittest
from unittest import mock

import numpy as np
import pandas as pd

from src.agents import AgentKind, Hyperparams, greedy_rollout
from src.envs import BenchmarkSpec, CandidEnv
from src.errors import ConfigError, DomainError, NumericalError, TrainingError
from src.instances import generate_dataset
from src.oracle import optimal_episode_reward
from src.trainer import (CSV_COLUMNS, MetricsLog, RunConfig, SearchSpace, aggregate_curves, derive_seed,
                         epsilon_at, evaluate, multi_seed, random_search, save_search, train)

TRAIN = generate_dataset(4, np.random.default_rng(10), 'train')
TEST = generate_dataset(3, np.random.default_rng(20), 'test')


def tiny_config(kind='saql', episodes=6, eval_interval=3, seed=0):
    hp = Hyperparams(lr=1e-3, gamma=0.9, epsilon_start=0.5, target_frequency=2, tau=0.5, batch_size=8)
    return RunConfig(spec=BenchmarkSpec.uniform('pl', 2, 3), kind=kind, hyperparams=hp, episodes=episodes,
                     eval_interval=eval_interval, seed=seed, hidden=(8,))


class TestSchedule(unittest.TestCase):
    def test_epsilon_fixtures(self):
        self.assertAlmostEqual(epsilon_at(0, 1000, 0.5), 0.5)
        self.assertAlmostEqual(epsilon_at(250, 1000, 0.5), 0.255)
        self.assertEqual(epsilon_at(500, 1000, 0.5), 0.01)
        self.assertEqual(epsilon_at(999, 1000, 0.5), 0.01)

    def test_epsilon_is_non_increasing(self):
        values = [epsilon_at(s, 200, 0.9) for s in range(200)]
        self.assertTrue(all(a >= b for a, b in zip(values, values[1:])))

    def test_negative_step(self):
        with self.assertRaises(DomainError):
            epsilon_at(-1, 100, 0.5)

    def test_derived_seeds(self):
        self.assertEqual(derive_seed(0, 3), derive_seed(0, 3))
        self.assertEqual(len({derive_seed(0, s) for s in range(50)}), 50)
        self.assertNotEqual(derive_seed(0, 1), derive_seed(1, 1))


class TestMetricsLog(unittest.TestCase):
    def test_episodes_must_increase(self):
        log = MetricsLog()
        log.append(episode=1, step=10, epsilon=0.5, train_reward=3.0)
        with self.assertRaises(DomainError):
            log.append(episode=1, step=20, epsilon=0.4, train_reward=3.0)

    def test_csv_leaves_out_wall_clock(self):
        log = MetricsLog()
        log.append(episode=1, step=10, epsilon=0.5, train_reward=3.0, wall_clock=0.1)
        log.append(episode=2, step=20, epsilon=0.4, train_reward=4.0, eval_mean=5.0, eval_std=0.5, wall_clock=0.2)
        self.assertEqual(log.final_eval, 5.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'metrics.csv')
            log.to_csv(path)
            df = pd.read_csv(path)
        self.assertEqual(list(df.columns), CSV_COLUMNS)
        self.assertTrue(np.isnan(df['eval_mean'][0]))

    def test_empty_log_has_no_final_eval(self):
        self.assertTrue(np.isnan(MetricsLog().final_eval))


class TestRunConfig(unittest.TestCase):
    def test_invariants(self):
        with self.assertRaises(ConfigError):
            tiny_config(episodes=0)
        with self.assertRaises(ConfigError):
            tiny_config(eval_interval=0)
        with self.assertRaises(ConfigError):
            tiny_config(seed=-1)
        with self.assertRaises(ConfigError):
            tiny_config(kind='qmix')


class TestTraining(unittest.TestCase):
    def test_same_seed_same_metrics(self):
        for kind in AgentKind:
            _, first = train(tiny_config(kind), TRAIN, TEST)
            _, second = train(tiny_config(kind), TRAIN, TEST)
            pd.testing.assert_frame_equal(first.frame[CSV_COLUMNS], second.frame[CSV_COLUMNS])

    def test_seed_changes_the_run(self):
        _, first = train(tiny_config(seed=0), TRAIN, TEST)
        _, second = train(tiny_config(seed=1), TRAIN, TEST)
        self.assertFalse(first.frame['train_reward'].equals(second.frame['train_reward']))

    def test_episode_and_step_accounting(self):
        _, log = train(tiny_config(), TRAIN, TEST)
        df = log.frame
        self.assertEqual(list(df['episode']), [1, 2, 3, 4, 5, 6])
        self.assertEqual(list(df['step']), [10, 20, 30, 40, 50, 60])
        self.assertEqual(list(log.eval_rows()['episode']), [3, 6])
        self.assertEqual(df['epsilon'].iloc[-1], 0.01)
        self.assertTrue((df['wall_clock'].diff().dropna() >= 0).all())

    def test_round_robin_over_training_set(self):
        with mock.patch.object(CandidEnv, 'reset', autospec=True, side_effect=CandidEnv.reset) as spy:
            _, log = train(tiny_config(), TRAIN, TEST)
        self.assertEqual([c.args[1].id for c in spy.call_args_list], [0, 1, 2, 3, 0, 1])
        for reward, inst in zip(log.frame['train_reward'], [0, 1, 2, 3, 0, 1]):
            self.assertLessEqual(reward, optimal_episode_reward(BenchmarkSpec.uniform('pl', 2, 3), TRAIN[inst]) + 1e-12)

    def test_no_evaluation_when_interval_exceeds_episodes(self):
        _, log = train(tiny_config(episodes=2, eval_interval=5), TRAIN, TEST)
        self.assertEqual(len(log.eval_rows()), 0)

    def test_update_failure_is_reported_with_seed(self):
        with mock.patch('src.agents.Agent.update', side_effect=NumericalError('loss is not finite')):
            with self.assertRaises(TrainingError) as ctx:
                train(tiny_config(seed=4), TRAIN, TEST)
        self.assertEqual(ctx.exception.seed, 4)

    def test_empty_training_set(self):
        with self.assertRaises(DomainError):
            train(tiny_config(), [], TEST)


class TestEvaluation(unittest.TestCase):
    def setUp(self):
        self.agent, _ = train(tiny_config(episodes=3), TRAIN, TEST)

    def test_matches_single_rollouts(self):
        env = CandidEnv(self.agent.spec)
        expected = [greedy_rollout(self.agent, env, inst) for inst in TEST]
        mean, std = evaluate(self.agent, TEST)
        self.assertAlmostEqual(mean, np.mean(expected), places=12)
        self.assertAlmostEqual(std, np.std(expected), places=12)

    def test_evaluation_leaves_agent_unchanged(self):
        before = [p.copy() for pair in self.agent.networks for p in pair.online.params() + pair.target.params()]
        first = evaluate(self.agent, TEST)
        after = [p for pair in self.agent.networks for p in pair.online.params() + pair.target.params()]
        for a, b in zip(before, after):
            np.testing.assert_array_equal(a, b)
        self.assertEqual(first, evaluate(self.agent, TEST))

    def test_bounded_by_oracle_mean(self):
        spec = self.agent.spec
        optimum = np.mean([optimal_episode_reward(spec, inst) for inst in TEST])
        self.assertLessEqual(evaluate(self.agent, TEST)[0], optimum + 1e-12)

    def test_empty_test_set(self):
        with self.assertRaises(DomainError):
            evaluate(self.agent, [])


class TestMultiSeed(unittest.TestCase):
    def test_single_seed_has_zero_spread(self):
        result = multi_seed(tiny_config(), [0], train_set=TRAIN, test_set=TEST)
        agg = result.aggregate
        self.assertEqual(list(agg['episode']), [3, 6])
        self.assertTrue((agg['std'] == 0.0).all())
        np.testing.assert_array_equal(agg['mean'], result.runs[0].log.eval_rows()['eval_mean'])
        np.testing.assert_array_equal(agg['median'], agg['mean'])

    def test_seed_order_does_not_matter(self):
        first = multi_seed(tiny_config(), [2, 0, 1], train_set=TRAIN, test_set=TEST)
        second = multi_seed(tiny_config(), [1, 2, 0], train_set=TRAIN, test_set=TEST)
        self.assertEqual(first.seeds, [0, 1, 2])
        pd.testing.assert_frame_equal(first.aggregate, second.aggregate)

    def test_runs_use_derived_seeds(self):
        result = multi_seed(tiny_config(), [5], train_set=TRAIN, test_set=TEST)
        _, direct = train(tiny_config(seed=derive_seed(0, 5)), TRAIN, TEST)
        pd.testing.assert_frame_equal(result.runs[0].log.frame[CSV_COLUMNS], direct.frame[CSV_COLUMNS])

    def test_aggregate_statistics(self):
        logs = {}
        for seed, values in enumerate([[1.0, 4.0], [2.0, 5.0], [6.0, 9.0]]):
            log = MetricsLog()
            for episode, value in zip((10, 20), values):
                log.append(episode=episode, step=episode * 10, epsilon=0.1, train_reward=0.0, eval_mean=value)
            logs[seed] = log
        agg = aggregate_curves(logs)
        np.testing.assert_allclose(agg['mean'], [3.0, 6.0])
        np.testing.assert_allclose(agg['median'], [2.0, 5.0])
        np.testing.assert_allclose(agg['std'], [np.std([1.0, 2.0, 6.0])] * 2)

    def test_invalid_seed_lists(self):
        with self.assertRaises(ConfigError):
            multi_seed(tiny_config(), [], train_set=TRAIN, test_set=TEST)
        with self.assertRaises(ConfigError):
            multi_seed(tiny_config(), [1, 1], train_set=TRAIN, test_set=TEST)

    def test_failed_seed_aborts_the_aggregate(self):
        with mock.patch('src.agents.Agent.update', side_effect=NumericalError('loss is not finite')):
            with self.assertRaises(TrainingError) as ctx:
                multi_seed(tiny_config(), [3, 7], train_set=TRAIN, test_set=TEST)
        self.assertEqual(ctx.exception.seed, 3)


class TestSearchSpace(unittest.TestCase):
    def test_published_values_lie_in_the_space(self):
        space = SearchSpace()
        for kind in AgentKind:
            self.assertTrue(space.contains(Hyperparams.published(kind).as_dict()), kind)

    def test_samples_are_seeded_and_in_range(self):
        space = SearchSpace()
        samples = space.sample(30, seed=1)
        self.assertEqual(samples, space.sample(30, seed=1))
        self.assertNotEqual(samples, space.sample(30, seed=2))
        for params in samples:
            self.assertTrue(space.contains(params))
            self.assertIsInstance(params['batch_size'], int)
            Hyperparams(**params)

    def test_learning_rates_are_log_spread(self):
        lrs = np.array([p['lr'] for p in SearchSpace().sample(400, seed=0)])
        # a log-uniform draw lands below 1e-4 about half the time
        self.assertAlmostEqual(np.mean(lrs < 1e-4), 0.5, delta=0.1)

    def test_empty_range(self):
        with self.assertRaises(ConfigError):
            SearchSpace(tau=(0.5, 0.5))
        with self.assertRaises(ConfigError):
            SearchSpace(gamma=(0.9, 1.0))


class TestRandomSearch(unittest.TestCase):
    def search(self, **kwargs):
        return random_search('iql', SearchSpace(batch_size=(8, 16)), n_configs=3, seeds=[0, 1],
                             base_config=tiny_config('iql', episodes=4, eval_interval=4),
                             train_set=TRAIN, test_set=TEST, **kwargs)

    def test_ranking(self):
        table = self.search()
        self.assertEqual(sorted(table['config_id']), [0, 1, 2])
        self.assertTrue(table['median_eval'].is_monotonic_decreasing)
        for _, row in table.iterrows():
            evals = [float(v) for v in row['per_seed_evals'].split(';')]
            self.assertEqual(len(evals), 2)
            self.assertAlmostEqual(row['median_eval'], np.median(evals))

    def test_deterministic(self):
        pd.testing.assert_frame_equal(self.search(), self.search())

    def test_candidates_are_appended(self):
        table = self.search(candidates=[Hyperparams.published('iql').as_dict()])
        self.assertEqual(sorted(table['config_id']), [0, 1, 2, 3])
        published = table[table['config_id'] == 3].iloc[0]
        self.assertEqual(published['batch_size'], 63)

    def test_saved_table(self):
        table = self.search()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'hpo.csv')
            save_search(table, path)
            loaded = pd.read_csv(path)
        self.assertEqual(list(loaded['config_id']), list(table['config_id']))

    def test_needs_a_budget(self):
        with self.assertRaises(ConfigError):
            random_search('iql', SearchSpace(), n_configs=0, seeds=[0], base_config=tiny_config('iql'),
                          train_set=TRAIN, test_set=TEST)
        with self.assertRaises(ConfigError):
            random_search('iql', SearchSpace(), n_configs=1, seeds=[0], train_set=TRAIN, test_set=TEST)


if __name__ == '__main__':
    unittest.main()
