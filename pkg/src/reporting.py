import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import seaborn as sns

from src.agents import AgentKind, Hyperparams
from src.config import EVAL_INTERVAL, FIGURES_DIR, HIDDEN_SIZES, N_INSTANCES, default_episodes
from src.envs import BenchmarkKind, BenchmarkSpec, SelectionOrder
from src.errors import ConfigError
from src.instances import InstanceSet, generate_dataset, load_instances
from src.oracle import baseline_report
from src.trainer import RunConfig, multi_seed
from src.utils import episode_formatter, setup_logger, write_csv

logger = setup_logger("CandidReporting")

CURVE_COLUMNS = ['setting', 'algo', 'episode', 'mean', 'std', 'median']
BASELINE_COLUMNS = ['setting', 'optimal', 'optimal_1d']
ALL_ALGOS = tuple(k.value for k in AgentKind)
SEQUENTIAL_ALGOS = (AgentKind.SAQL.value, AgentKind.SIMSDQN.value)


@dataclass(frozen=True)
class FigurePreset:
    settings: Tuple[Tuple[str, BenchmarkSpec], ...]
    algos: Tuple[str, ...] = ALL_ALGOS
    title: str = ''


def _pl(dim=5, n_act=3, importance_decay=0.5, order=SelectionOrder.DESCENDING):
    return BenchmarkSpec.uniform(BenchmarkKind.PL, dim, n_act, importance_decay=importance_decay, order=order)


FIGURES: Dict[str, FigurePreset] = {
    'comparison': FigurePreset(
        settings=(('sigmoid-5d', BenchmarkSpec.uniform(BenchmarkKind.SIGMOID, 5, 3)), ('pl-5d', _pl())),
        title='5D Sigmoid vs 5D Piecewise Linear',
    ),
    'scaling-dim': FigurePreset(
        settings=tuple((f'dim-{d}', _pl(dim=d)) for d in (2, 5, 10)),
        title='Scaling the number of action dimensions (n_act = 3)',
    ),
    'scaling-nact': FigurePreset(
        settings=tuple((f'n_act-{n}', _pl(n_act=n)) for n in (3, 5, 10)),
        title='Scaling the actions per dimension (dim = 5)',
    ),
    'importance': FigurePreset(
        settings=tuple((f'lambda-{lam}', _pl(importance_decay=lam)) for lam in (0.25, 0.5, 0.75, 1.0)),
        title='Importance decays on 5D Piecewise Linear',
    ),
    'reversed': FigurePreset(
        settings=(('descending', _pl()), ('reversed', _pl(order=SelectionOrder.REVERSED))),
        algos=SEQUENTIAL_ALGOS,
        title='Selection order on 5D Piecewise Linear',
    ),
}


def _instance_sets(spec: BenchmarkSpec, n_instances: int, instance_seed: int,
                   train_path: Optional[str], test_path: Optional[str]) -> Tuple[InstanceSet, InstanceSet]:
    if spec.kind is BenchmarkKind.PL and train_path and test_path:
        return load_instances(train_path, 'train'), load_instances(test_path, 'test')
    train_seq, test_seq = np.random.SeedSequence(instance_seed).spawn(2)
    kind = spec.kind.value
    return (generate_dataset(n_instances, np.random.default_rng(train_seq), 'train', kind, spec.dim),
            generate_dataset(n_instances, np.random.default_rng(test_seq), 'test', kind, spec.dim))


def export_plot_data(figure: str, out_dir: str = FIGURES_DIR, algos: Optional[Sequence[str]] = None,
                     seeds: Sequence[int] = (0,), episodes: Optional[int] = None,
                     eval_interval: int = EVAL_INTERVAL,
                     n_instances: int = N_INSTANCES, instance_seed: int = 0, train_path: Optional[str] = None,
                     test_path: Optional[str] = None, render: bool = False, workers: int = 1,
                     hidden: Sequence[int] = HIDDEN_SIZES,
                     overrides: Optional[dict] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Trains every (setting, algorithm) of a figure preset and writes its curves.

    Writes `<figure>.csv` with one row per scheduled evaluation and
    `<figure>_baselines.csv` with test-set oracle means of the PL settings.
    """
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}, expected one of {sorted(FIGURES)}")
    preset = FIGURES[figure]
    algos = tuple(algos) if algos else preset.algos
    for algo in algos:
        if algo not in ALL_ALGOS:
            raise ConfigError(f"unknown algorithm {algo!r}")
    os.makedirs(out_dir, exist_ok=True)

    curves: List[pd.DataFrame] = []
    baselines = []
    for setting, spec in preset.settings:
        train_set, test_set = _instance_sets(spec, n_instances, instance_seed, train_path, test_path)
        if spec.kind is BenchmarkKind.PL:
            report = baseline_report(spec, test_set)
            baselines.append({'setting': setting, 'optimal': report.mean_optimal,
                              'optimal_1d': report.mean_optimal_1d})
        budget = episodes or default_episodes(spec.dim)
        for algo in algos:
            hp = Hyperparams(**{**Hyperparams.published(algo).as_dict(), **(overrides or {})})
            config = RunConfig(spec=spec, kind=algo, hyperparams=hp, episodes=budget,
                               eval_interval=eval_interval, hidden=tuple(hidden))
            logger.info(f"[{figure}] {setting} / {algo}: {len(seeds)} seeds x {budget} episodes")
            result = multi_seed(config, seeds, workers=workers, train_set=train_set, test_set=test_set)
            curves.append(result.aggregate.assign(setting=setting, algo=algo))

    frame = pd.concat(curves, ignore_index=True)[CURVE_COLUMNS]
    baseline_frame = pd.DataFrame(baselines, columns=BASELINE_COLUMNS)
    write_csv(frame, os.path.join(out_dir, f'{figure}.csv'))
    write_csv(baseline_frame, os.path.join(out_dir, f'{figure}_baselines.csv'))
    logger.info(f"Saved plot data for {figure} to {out_dir}")
    if render:
        render_curves(frame, baseline_frame, os.path.join(out_dir, f'{figure}.svg'), title=preset.title)
    return frame, baseline_frame


def render_curves(frame: pd.DataFrame, baselines: pd.DataFrame, path: str, title: str = '') -> str:
    """One panel per setting: mean evaluation reward per algorithm with a +/- std band."""
    sns.set_theme(style='whitegrid')
    settings = list(dict.fromkeys(frame['setting']))
    fig, axes = plt.subplots(1, len(settings), figsize=(5 * len(settings), 4), sharey=True, squeeze=False)
    palette = dict(zip(ALL_ALGOS, sns.color_palette('tab10', len(ALL_ALGOS))))

    for ax, setting in zip(axes[0], settings):
        panel = frame[frame['setting'] == setting]
        for algo, curve in panel.groupby('algo', sort=False):
            ax.plot(curve['episode'], curve['mean'], label=algo, color=palette[algo])
            ax.fill_between(curve['episode'], curve['mean'] - curve['std'], curve['mean'] + curve['std'],
                            color=palette[algo], alpha=0.2)
        row = baselines[baselines['setting'] == setting]
        if len(row):
            ax.axhline(row['optimal'].iloc[0], linestyle='--', color='black', alpha=0.6, label='optimal')
            ax.axhline(row['optimal_1d'].iloc[0], linestyle=':', color='gray', label='optimal (1D)')
        ax.set_title(setting)
        ax.set_xlabel('Episode')
        ax.xaxis.set_major_formatter(episode_formatter)
    axes[0][0].set_ylabel('Test episodic reward')
    axes[0][-1].legend(loc='lower right')
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
    logger.info(f"Saved figure to {path}")
    return path
