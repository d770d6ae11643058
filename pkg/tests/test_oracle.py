import math
import os
import tempfile
import unittest

import numpy as np

from src.envs import BenchmarkSpec, CandidEnv
from src.errors import CapacityError, DomainError
from src.instances import PLInstance, generate_dataset
from src.oracle import (baseline_report, exhaustive_episode_reward, optimal_1d_baseline, optimal_episode_reward,
                        optimal_joint_action, value_iteration_equivalence)


class TestOptimalAction(unittest.TestCase):
    def test_fixture(self):
        spec = BenchmarkSpec.uniform('pl', 2, 3)
        action, value = optimal_joint_action(spec, PLInstance(id=0, x=4.0, y=0.8, b=1), 4)
        # (1, 2) and (2, 0) both predict 0.75; the smaller index wins
        self.assertEqual(action, (1, 2))
        self.assertAlmostEqual(value, 0.794534, places=6)

    def test_linear_target_is_matched_every_step(self):
        spec = BenchmarkSpec.uniform('pl', 1, 10)
        self.assertAlmostEqual(optimal_episode_reward(spec, PLInstance(id=0, x=4.5, y=0.5, b=1)), 10.0, places=9)

    def test_optimum_dominates_any_fixed_policy(self):
        spec = BenchmarkSpec.uniform('pl', 2, 3)
        env = CandidEnv(spec)
        rng = np.random.default_rng(0)
        for inst in generate_dataset(20, np.random.default_rng(1)):
            env.reset(inst)
            total = 0.0
            while not env.done:
                total += env.step(tuple(rng.integers(0, 3, size=2))).reward
            self.assertLessEqual(total, optimal_episode_reward(spec, inst) + 1e-12)


class TestExhaustiveSearch(unittest.TestCase):
    def test_per_step_greedy_equals_sequence_search(self):
        spec = BenchmarkSpec.uniform('pl', 2, 3, horizon=3)
        for inst in generate_dataset(50, np.random.default_rng(3)):
            self.assertEqual(exhaustive_episode_reward(spec, inst), optimal_episode_reward(spec, inst))

    def test_sigmoid_sequence_search(self):
        spec = BenchmarkSpec.uniform('sigmoid', 2, 3, horizon=4)
        for inst in generate_dataset(10, np.random.default_rng(4), kind='sigmoid', dim=2):
            self.assertEqual(exhaustive_episode_reward(spec, inst), optimal_episode_reward(spec, inst))

    def test_capacity(self):
        spec = BenchmarkSpec.uniform('pl', 5, 4)
        with self.assertRaises(CapacityError):
            exhaustive_episode_reward(spec, PLInstance(id=0, x=1.0, y=0.5, b=1))


class TestOneDimensionalBaseline(unittest.TestCase):
    def test_fixture(self):
        spec = BenchmarkSpec.uniform('pl', 2, 3, horizon=1)
        # pl(0) = 0.3, nearest first-dimension value is 0.5
        inst = PLInstance(id=0, x=0.0, y=0.3, b=1)
        self.assertAlmostEqual(optimal_1d_baseline(spec, inst), math.exp(-0.92), places=12)
        self.assertAlmostEqual(math.exp(-0.92), 0.398519, places=6)

    def test_bounded_by_optimum_for_odd_n_act(self):
        for dim, n_act in [(2, 3), (3, 5), (4, 3)]:
            spec = BenchmarkSpec.uniform('pl', dim, n_act)
            for inst in generate_dataset(20, np.random.default_rng(dim)):
                self.assertLessEqual(optimal_1d_baseline(spec, inst), optimal_episode_reward(spec, inst) + 1e-12)

    def test_sigmoid_is_rejected(self):
        spec = BenchmarkSpec.uniform('sigmoid', 2, 3)
        inst = generate_dataset(1, np.random.default_rng(0), kind='sigmoid', dim=2)[0]
        with self.assertRaises(DomainError):
            optimal_1d_baseline(spec, inst)


class TestBaselineReport(unittest.TestCase):
    def test_report_and_csv(self):
        spec = BenchmarkSpec.uniform('pl', 2, 3)
        instances = generate_dataset(5, np.random.default_rng(2))
        report = baseline_report(spec, instances)
        np.testing.assert_array_equal(report.instance_ids, range(5))
        self.assertAlmostEqual(report.mean_optimal, np.mean([optimal_episode_reward(spec, i) for i in instances]))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'tables', 'baselines.csv')
            report.to_csv(path)
            with open(path, 'rb') as f:
                lines = f.read().split(b'\n')
        self.assertEqual(lines[0], b'instance_id,optimal,optimal_1d')
        self.assertEqual(len([line for line in lines if line]), 6)

    def test_even_n_act_warns(self):
        spec = BenchmarkSpec.uniform('pl', 2, 2, horizon=1)
        # pl(0) = 0 is hit by the first dimension alone, the second always adds +-0.25
        with self.assertLogs('CandidOracle', level='WARNING'):
            baseline_report(spec, [PLInstance(id=0, x=3.0, y=0.9, b=1)])

    def test_empty_set(self):
        with self.assertRaises(DomainError):
            baseline_report(BenchmarkSpec.uniform('pl', 2, 3), [])


class TestValueIteration(unittest.TestCase):
    def test_sequential_reformulation_is_equivalent(self):
        rng = np.random.default_rng(8)
        checked = 0
        for gamma in (0.0, 0.5, 0.9):
            for _ in range(7):
                dim = int(rng.integers(1, 4))
                n_act = tuple(int(n) for n in rng.integers(2, 4, size=dim))
                order = 'reversed' if rng.random() < 0.5 else 'descending'
                spec = BenchmarkSpec(kind='pl', dim=dim, n_act=n_act, horizon=3, order=order)
                inst = generate_dataset(1, rng)[0]
                self.assertTrue(value_iteration_equivalence(spec, inst, gamma), f"{spec} gamma={gamma}")
                checked += 1
        self.assertGreaterEqual(checked, 20)

    def test_sigmoid_equivalence(self):
        spec = BenchmarkSpec.uniform('sigmoid', 2, 3, horizon=3)
        inst = generate_dataset(1, np.random.default_rng(0), kind='sigmoid', dim=2)[0]
        self.assertTrue(value_iteration_equivalence(spec, inst))

    def test_limits(self):
        inst = PLInstance(id=0, x=1.0, y=0.5, b=1)
        with self.assertRaises(CapacityError):
            value_iteration_equivalence(BenchmarkSpec.uniform('pl', 4, 2, horizon=3), inst)
        with self.assertRaises(CapacityError):
            value_iteration_equivalence(BenchmarkSpec.uniform('pl', 2, 3), inst)
        with self.assertRaises(DomainError):
            value_iteration_equivalence(BenchmarkSpec.uniform('pl', 2, 3, horizon=3), inst, gamma=1.0)


if __name__ == '__main__':
    unittest.main()
