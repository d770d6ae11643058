"""Exact baselines by brute-force enumeration of the joint action grid."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Tuple

import numpy as np
import pandas as pd

from src.config import MAX_JOINT_ACTIONS
from src.envs import BenchmarkKind, BenchmarkSpec, joint_grid, rewards
from src.errors import CapacityError, DomainError
from src.instances import Instance, pl_value
from src.utils import setup_logger, write_csv

logger = setup_logger("CandidOracle")

# Largest spec value iteration will enumerate
VI_MAX_DIM = 3
VI_MAX_N_ACT = 4
VI_MAX_HORIZON = 5
VI_TOLERANCE = 1e-12


def _step_rewards(spec: BenchmarkSpec, inst: Instance) -> np.ndarray:
    """Reward of every joint action at every step, shape (T, prod(n_act))."""
    grid = joint_grid(spec)
    return np.stack([rewards(spec, inst, t, grid) for t in range(spec.horizon)])


def optimal_joint_action(spec: BenchmarkSpec, inst: Instance, t: int) -> Tuple[Tuple[int, ...], float]:
    grid = joint_grid(spec)
    step = rewards(spec, inst, t, grid)
    best = int(np.argmax(step))  # first maximum is the smallest mixed-radix index
    return tuple(int(a) for a in grid[best]), float(step[best])


def optimal_episode_reward(spec: BenchmarkSpec, inst: Instance) -> float:
    # dynamics do not depend on actions, so per-step maxima compose
    return float(sum(optimal_joint_action(spec, inst, t)[1] for t in range(spec.horizon)))


def exhaustive_episode_reward(spec: BenchmarkSpec, inst: Instance) -> float:
    """Backward induction over (t, previous joint action) states."""
    size = spec.joint_size
    if size * size * spec.horizon > MAX_JOINT_ACTIONS:
        raise CapacityError(f"sequence DP over {size} joint actions and T={spec.horizon} is too large")
    step = _step_rewards(spec, inst)
    following = np.zeros(size)
    policy = np.empty((spec.horizon, size), dtype=int)
    for t in range(spec.horizon - 1, -1, -1):
        current = np.empty(size)
        for prev in range(size):
            q = step[t] + following
            policy[t, prev] = int(np.argmax(q))
            current[prev] = q[policy[t, prev]]
        following = current
    # walk the optimal path from the all-zero previous action, accumulating in time order
    total, prev = 0.0, 0
    for t in range(spec.horizon):
        action = policy[t, prev]
        total += float(step[t, action])
        prev = action
    return total


def optimal_1d_baseline(spec: BenchmarkSpec, inst: Instance) -> float:
    """Best episodic reward of a predictor that uses only the first dimension."""
    if spec.kind is not BenchmarkKind.PL:
        raise DomainError("the optimal(1D) baseline is defined for the PL benchmark only")
    candidates = np.arange(spec.n_act[0]) / (spec.n_act[0] - 1)
    total = 0.0
    for t in range(spec.horizon):
        total += float(np.max(np.exp(-spec.c * np.abs(candidates - pl_value(inst, t)))))
    return total


@dataclass(frozen=True)
class BaselineReport:
    instance_ids: np.ndarray
    optimal: np.ndarray
    optimal_1d: np.ndarray

    @property
    def mean_optimal(self) -> float:
        return float(np.mean(self.optimal))

    @property
    def mean_optimal_1d(self) -> float:
        return float(np.mean(self.optimal_1d))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'instance_id': self.instance_ids,
            'optimal': self.optimal,
            'optimal_1d': self.optimal_1d,
        })

    def to_csv(self, path) -> None:
        write_csv(self.to_frame(), path)
        logger.info(f"Saved baseline report to {path}")


def baseline_report(spec: BenchmarkSpec, instances: Iterable[Instance]) -> BaselineReport:
    instances = list(instances)
    if not instances:
        raise DomainError("baseline report over an empty instance set")
    report = BaselineReport(
        instance_ids=np.array([inst.id for inst in instances], dtype=int),
        optimal=np.array([optimal_episode_reward(spec, inst) for inst in instances]),
        optimal_1d=np.array([optimal_1d_baseline(spec, inst) for inst in instances]),
    )
    if (report.optimal_1d > report.optimal).any():
        # only possible when an even n_act leaves no centered value for dimensions 2..M
        logger.warning("optimal(1D) exceeds the joint optimum on some instances (even n_act)")
    logger.info(f"Baselines over {len(instances)} instances: optimal {report.mean_optimal:.4f}, "
                f"optimal(1D) {report.mean_optimal_1d:.4f}")
    return report


def _sweep_until_fixed(states, backup) -> Dict:
    values = {s: 0.0 for s in states}
    changed = True
    while changed:
        changed = False
        for s in states:
            v = backup(s, values)
            if v != values[s]:
                values[s] = v
                changed = True
    return values


def value_iteration_equivalence(spec: BenchmarkSpec, inst: Instance, gamma: float = 0.9) -> bool:
    """Exact value iteration on the joint-action MDP and on its sequential
    reformulation; True iff composing the sequential greedy choices attains the
    joint optimum from every base state.

    Sequential substates are (t, previous joint index, chosen prefix). Inner
    sub-transitions carry zero reward and no discount; the last one pays r_t and
    discounts into (t + 1, joint, ()).
    """
    if spec.dim > VI_MAX_DIM or max(spec.n_act) > VI_MAX_N_ACT or spec.horizon > VI_MAX_HORIZON:
        raise CapacityError(f"value iteration needs M <= {VI_MAX_DIM}, n_act <= {VI_MAX_N_ACT} "
                            f"and T <= {VI_MAX_HORIZON}")
    if not 0.0 <= gamma < 1.0:
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")

    step = _step_rewards(spec, inst)
    size = spec.joint_size
    order = spec.selection_order
    bases = [(t, prev) for t in range(spec.horizon - 1, -1, -1) for prev in range(size)]

    def joint_backup(s, values):
        t, _ = s
        return max(step[t][j] + gamma * values.get((t + 1, j), 0.0) for j in range(size))

    original = _sweep_until_fixed(bases, joint_backup)

    def prefixes(length):
        return [tuple(p) for p in np.ndindex(*[spec.n_act[d] for d in order[:length]])]

    substates = [(t, prev, prefix) for t, prev in bases
                 for length in range(spec.dim - 1, -1, -1) for prefix in prefixes(length)]

    def assemble(prefix):
        joint = [0] * spec.dim
        for dim, a in zip(order, prefix):
            joint[dim] = a
        return int(np.ravel_multi_index(tuple(joint), spec.n_act))

    def choice_values(s, values):
        t, prev, prefix = s
        out = []
        for a in range(spec.n_act[order[len(prefix)]]):
            chosen = prefix + (a,)
            if len(chosen) < spec.dim:
                out.append(values[(t, prev, chosen)])
            else:
                j = assemble(chosen)
                out.append(step[t][j] + gamma * values.get((t + 1, j, ()), 0.0))
        return out

    sequential = _sweep_until_fixed(substates, lambda s, values: max(choice_values(s, values)))

    for t, prev in bases:
        prefix: Tuple[int, ...] = ()
        while len(prefix) < spec.dim:
            prefix += (int(np.argmax(choice_values((t, prev, prefix), sequential))),)
        j = assemble(prefix)
        attained = step[t][j] + gamma * original.get((t + 1, j), 0.0)
        if abs(attained - original[(t, prev)]) > VI_TOLERANCE:
            return False
        if abs(sequential[(t, prev, ())] - original[(t, prev)]) > VI_TOLERANCE:
            return False
    logger.debug(f"value iteration agrees on {len(bases)} base states ({size} joint actions)")
    return True
