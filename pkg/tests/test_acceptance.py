"""End-to-end learning checks at the published budgets.

These train real agents for thousands of episodes and take hours on one core;
they only run with CANDID_LONG_TESTS=1. Set CANDID_WORKERS to spread seeds
over processes.
"""
import os
import tempfile
import unittest

import numpy as np

from src.agents import Hyperparams
from src.config import N_INSTANCES, default_episodes
from src.envs import BenchmarkSpec
from src.instances import generate_dataset
from src.oracle import baseline_report
from src.trainer import RunConfig, SearchSpace, multi_seed, random_search, train

LONG = os.environ.get('CANDID_LONG_TESTS') == '1'
WORKERS = int(os.environ.get('CANDID_WORKERS', '1'))


def datasets(dim=1, kind='pl'):
    train_seq, test_seq = np.random.SeedSequence(0).spawn(2)
    return (generate_dataset(N_INSTANCES, np.random.default_rng(train_seq), 'train', kind, dim),
            generate_dataset(N_INSTANCES, np.random.default_rng(test_seq), 'test', kind, dim))


def final_means(spec, algo, episodes, seeds, train_set, test_set):
    config = RunConfig(spec=spec, kind=algo, hyperparams=Hyperparams.published(algo), episodes=episodes,
                       eval_interval=episodes)
    return multi_seed(config, seeds, workers=WORKERS, train_set=train_set, test_set=test_set).final_evals


class TestRerunDeterminism(unittest.TestCase):
    def test_metrics_csv_is_bit_identical(self):
        train_set, test_set = datasets()
        spec = BenchmarkSpec.uniform('pl', 2, 3)
        hp = Hyperparams(lr=1e-3, gamma=0.9, epsilon_start=0.5, target_frequency=2, tau=0.5, batch_size=16)
        config = RunConfig(spec=spec, kind='simsdqn', hyperparams=hp, episodes=5, eval_interval=5, seed=11,
                           hidden=(16,))
        contents = []
        with tempfile.TemporaryDirectory() as tmp:
            for i in range(2):
                _, log = train(config, train_set, test_set)
                path = os.path.join(tmp, f'metrics_{i}.csv')
                log.to_csv(path)
                with open(path, 'rb') as f:
                    contents.append(f.read())
        self.assertEqual(contents[0], contents[1])


@unittest.skipUnless(LONG, "set CANDID_LONG_TESTS=1 to run full training budgets")
class TestLearning(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.train_set, cls.test_set = datasets()
        cls.spec_2d = BenchmarkSpec.uniform('pl', 2, 3)
        cls.spec_5d = BenchmarkSpec.uniform('pl', 5, 3)

    def test_two_dimensions_near_optimal(self):
        optimum = baseline_report(self.spec_2d, self.test_set).mean_optimal
        medians = {}
        for algo in ('ddqn', 'saql', 'simsdqn', 'iql'):
            medians[algo] = float(np.median(final_means(self.spec_2d, algo, default_episodes(2), range(5),
                                                        self.train_set, self.test_set)))
        for algo in ('ddqn', 'saql', 'simsdqn'):
            self.assertGreaterEqual(medians[algo], 0.95 * optimum, algo)
        self.assertLess(medians['iql'], medians['saql'])

    def test_five_dimensions_sequential_beats_independent(self):
        report = baseline_report(self.spec_5d, self.test_set)
        saql = final_means(self.spec_5d, 'saql', 30000, range(10), self.train_set, self.test_set)
        iql = final_means(self.spec_5d, 'iql', 30000, range(10), self.train_set, self.test_set)
        simsdqn = final_means(self.spec_5d, 'simsdqn', 30000, range(10), self.train_set, self.test_set)
        self.assertGreater(saql.mean() - iql.mean(), saql.std() + iql.std())
        self.assertGreater(saql.mean(), report.mean_optimal_1d)
        self.assertGreater(simsdqn.mean(), report.mean_optimal_1d)

    def test_ten_dimensions_scaling(self):
        budget = 10000
        spec_10d = BenchmarkSpec.uniform('pl', 10, 3)
        results = {}
        for spec in (self.spec_5d, spec_10d):
            for algo in ('saql', 'ddqn'):
                results[(spec.dim, algo)] = final_means(spec, algo, budget, range(10),
                                                        self.train_set, self.test_set).mean()
        self.assertGreaterEqual(results[(10, 'saql')], 0.9 * results[(5, 'saql')])
        self.assertLess(results[(10, 'ddqn')], results[(5, 'ddqn')])

    def test_published_settings_beat_median_sampled_settings(self):
        train_set, test_set = datasets(dim=5, kind='sigmoid')
        spec = BenchmarkSpec.uniform('sigmoid', 5, 3)
        for algo in ('saql', 'iql'):
            with self.subTest(algo=algo):
                published = Hyperparams.published(algo)
                base = RunConfig(spec=spec, kind=algo, hyperparams=published, episodes=3000, eval_interval=3000)
                table = random_search(algo, SearchSpace(), n_configs=20, seeds=range(3), base_config=base,
                                      candidates=[published.as_dict()], workers=WORKERS,
                                      train_set=train_set, test_set=test_set)
                sampled = table[table['config_id'] < 20]
                published_row = table[table['config_id'] == 20].iloc[0]
                self.assertGreater(published_row['median_eval'], sampled['median_eval'].median())

    def test_reversed_order_does_not_help(self):
        reversed_spec = BenchmarkSpec.uniform('pl', 5, 3, order='reversed')
        forward = final_means(self.spec_5d, 'saql', 30000, range(10), self.train_set, self.test_set)
        backward = final_means(reversed_spec, 'saql', 30000, range(10), self.train_set, self.test_set)
        self.assertLessEqual(np.median(backward) - np.median(forward), forward.std() + backward.std())


if __name__ == '__main__':
    unittest.main()
