import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.append(str(Path(__file__).resolve().parent.parent))

import numpy as np
import pandas as pd

from src.agents import AgentKind, Hyperparams, load_agent, save_agent
from src.config import (DEFAULT_C, DEFAULT_HORIZON, DEFAULT_IMPORTANCE_DECAY, EVAL_INTERVAL, HPO_N_CONFIGS,
                        HPO_SEEDS, N_INSTANCES, RUNS_DIR, TABLES_DIR, TEST_INSTANCES, TRAIN_INSTANCES,
                        default_episodes, ensure_output_dirs)
from src.envs import BenchmarkSpec, SelectionOrder
from src.errors import ConfigError, category_of, exit_code
from src.instances import LABELS, generate_dataset, load_instances, save_instances
from src.oracle import baseline_report
from src.reporting import FIGURES, export_plot_data
from src.trainer import RunConfig, SearchSpace, evaluate, multi_seed, random_search, save_search
from src.utils import CSV_FLOAT_FORMAT, set_log_level, setup_logger, write_csv

logger = setup_logger("CandidCLI")

HYPERPARAM_KEYS = ('lr', 'gamma', 'epsilon_start', 'target_frequency', 'tau', 'batch_size')


def parse_bool(text):
    value = text.strip().lower()
    if value in ('true', 'yes', 'on', '1'):
        return True
    if value in ('false', 'no', 'off', '0'):
        return False
    raise ValueError(text)


def parse_seeds(text):
    """Seed list from '3', '0..9' (inclusive) or comma/space separated mixes of both."""
    seeds = []
    for token in text.replace(',', ' ').split():
        if '..' in token:
            low, high = token.split('..', 1)
            low, high = int(low), int(high)
            if high < low:
                raise ValueError(token)
            seeds.extend(range(low, high + 1))
        else:
            seeds.append(int(token))
    if not seeds:
        raise ValueError(text)
    return seeds


# key -> (parser, expected type shown in errors)
CONFIG_SCHEMA = {
    'benchmark': (str, 'one of pl, sigmoid'),
    'dim': (int, 'integer'),
    'n_act': (int, 'integer'),
    'lambda': (float, 'real'),
    'reverse_order': (parse_bool, 'boolean'),
    'c': (float, 'real'),
    'horizon': (int, 'integer'),
    'algo': (str, 'algorithm name'),
    'seed': (int, 'integer'),
    'seeds': (parse_seeds, 'seed list'),
    'episodes': (int, 'integer'),
    'eval_interval': (int, 'integer'),
    'train_instances': (str, 'path'),
    'test_instances': (str, 'path'),
    'out': (str, 'path'),
    'workers': (int, 'integer'),
    'lr': (float, 'real'),
    'gamma': (float, 'real'),
    'epsilon_start': (float, 'real'),
    'target_frequency': (int, 'integer'),
    'tau': (float, 'real'),
    'batch_size': (int, 'integer'),
}


@dataclass(frozen=True)
class CliConfig:
    """Run settings; None means unset so that flags > file > defaults can be layered."""
    command: Optional[str] = None
    benchmark: Optional[str] = None
    dim: Optional[int] = None
    n_act: Optional[int] = None
    lam: Optional[float] = None
    reverse_order: Optional[bool] = None
    c: Optional[float] = None
    horizon: Optional[int] = None
    algo: Optional[str] = None
    seed: Optional[int] = None
    seeds: Optional[List[int]] = None
    episodes: Optional[int] = None
    eval_interval: Optional[int] = None
    train_instances: Optional[str] = None
    test_instances: Optional[str] = None
    out: Optional[str] = None
    workers: Optional[int] = None
    lr: Optional[float] = None
    gamma: Optional[float] = None
    epsilon_start: Optional[float] = None
    target_frequency: Optional[int] = None
    tau: Optional[float] = None
    batch_size: Optional[int] = None

    def merged(self, overrides: 'CliConfig') -> 'CliConfig':
        changes = {f.name: getattr(overrides, f.name) for f in fields(self) if getattr(overrides, f.name) is not None}
        return replace(self, **changes)

    def value(self, name, default=None):
        current = getattr(self, name)
        return default if current is None else current

    def benchmark_spec(self) -> BenchmarkSpec:
        return BenchmarkSpec.uniform(
            self.value('benchmark', 'pl'),
            self.value('dim', 2),
            self.value('n_act', 3),
            importance_decay=self.value('lam', DEFAULT_IMPORTANCE_DECAY),
            c=self.value('c', DEFAULT_C),
            horizon=self.value('horizon', DEFAULT_HORIZON),
            order=SelectionOrder.REVERSED if self.value('reverse_order', False) else SelectionOrder.DESCENDING,
        )

    def hyperparam_overrides(self) -> dict:
        return {key: getattr(self, key) for key in HYPERPARAM_KEYS if getattr(self, key) is not None}

    def hyperparams(self) -> Hyperparams:
        algo = self.value('algo', AgentKind.SAQL.value)
        try:
            published = Hyperparams.published(algo).as_dict()
        except ValueError:
            raise ConfigError(f"unknown algorithm {algo!r}, expected one of {[k.value for k in AgentKind]}") from None
        return Hyperparams(**{**published, **self.hyperparam_overrides()})

    def validate(self) -> 'CliConfig':
        self.benchmark_spec()
        self.hyperparams()
        for name in ('episodes', 'eval_interval', 'workers'):
            if getattr(self, name) is not None and getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        return self


def load_config(path) -> CliConfig:
    """Reads `key = value` lines; blank lines and `#` comments are skipped."""
    values = {}
    with open(path, encoding='utf-8') as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, text = (part.strip() for part in line.split('=', 1))
            key = key.replace('-', '_')
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            parse, expected = CONFIG_SCHEMA[key]
            try:
                values['lam' if key == 'lambda' else key] = parse(text)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: key '{key}' expects {expected}, got {text!r}") from None
    config = CliConfig(**values).validate()
    logger.info(f"Loaded {len(values)} settings from {path}")
    return config


class CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"usage: {message}")


def _add_benchmark_flags(parser):
    group = parser.add_argument_group('benchmark')
    group.add_argument('--benchmark', choices=['pl', 'sigmoid'])
    group.add_argument('--dim', type=int)
    group.add_argument('--n-act', dest='n_act', type=int)
    group.add_argument('--lambda', dest='lam', type=float)
    group.add_argument('--reverse-order', dest='reverse_order', action='store_true', default=None)
    group.add_argument('--c', type=float)
    group.add_argument('--horizon', type=int)


def _add_hyperparam_flags(parser):
    group = parser.add_argument_group('hyperparameters')
    group.add_argument('--lr', type=float)
    group.add_argument('--gamma', type=float)
    group.add_argument('--epsilon-start', dest='epsilon_start', type=float)
    group.add_argument('--target-frequency', dest='target_frequency', type=int)
    group.add_argument('--tau', type=float)
    group.add_argument('--batch-size', dest='batch_size', type=int)


def _add_budget_flags(parser):
    parser.add_argument('--episodes', type=int)
    parser.add_argument('--eval-interval', dest='eval_interval', type=int)
    parser.add_argument('--train-instances', dest='train_instances')
    parser.add_argument('--test-instances', dest='test_instances')
    parser.add_argument('--workers', type=int)


def _seed_list(text):
    try:
        return parse_seeds(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('--quiet', action='store_true', help='warnings and errors only')
    common.add_argument('--config', help='key = value settings file; flags override it')

    parser = CliParser(prog='candid', description='CANDID benchmark workbench', parents=[common])
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen-instances', parents=[common], help='sample an instance set')
    gen.add_argument('--n', type=int, default=N_INSTANCES)
    gen.add_argument('--seed', type=int)
    gen.add_argument('--out', required=True)
    gen.add_argument('--label', choices=LABELS, default='train')
    gen.add_argument('--benchmark', choices=['pl', 'sigmoid'])
    gen.add_argument('--dim', type=int)

    train = commands.add_parser('train', parents=[common], help='train one algorithm on one or more seeds')
    train.add_argument('--algo', choices=[k.value for k in AgentKind])
    _add_benchmark_flags(train)
    _add_hyperparam_flags(train)
    _add_budget_flags(train)
    train.add_argument('--seed', type=int)
    train.add_argument('--seeds', type=_seed_list, nargs='+')
    train.add_argument('--out')

    ev = commands.add_parser('eval', parents=[common], help='greedy evaluation of a saved agent')
    ev.add_argument('--agent', required=True)
    ev.add_argument('--instances', required=True)
    ev.add_argument('--out')

    base = commands.add_parser('baseline', parents=[common], help='optimal and optimal(1D) rewards per instance')
    _add_benchmark_flags(base)
    base.add_argument('--instances', required=True)
    base.add_argument('--out')

    hpo = commands.add_parser('hpo', parents=[common], help='random hyperparameter search')
    hpo.add_argument('--algo', choices=[k.value for k in AgentKind])
    _add_benchmark_flags(hpo)
    _add_budget_flags(hpo)
    hpo.add_argument('--n-configs', dest='n_configs', type=int, default=HPO_N_CONFIGS)
    hpo.add_argument('--seeds', type=_seed_list, nargs='+')
    hpo.add_argument('--seed', type=int, help='master seed of the sampler and runs')
    hpo.add_argument('--include-published', dest='include_published', action='store_true')
    hpo.add_argument('--out')

    plot = commands.add_parser('export-plot-data', parents=[common], help='curves behind a figure preset')
    plot.add_argument('--figure', required=True, choices=sorted(FIGURES))
    plot.add_argument('--algos', nargs='+', choices=[k.value for k in AgentKind])
    plot.add_argument('--seeds', type=_seed_list, nargs='+')
    plot.add_argument('--episodes', type=int)
    plot.add_argument('--eval-interval', dest='eval_interval', type=int)
    plot.add_argument('--n-instances', dest='n_instances', type=int, default=N_INSTANCES)
    plot.add_argument('--train-instances', dest='train_instances')
    plot.add_argument('--test-instances', dest='test_instances')
    plot.add_argument('--workers', type=int)
    plot.add_argument('--render', action='store_true')
    plot.add_argument('--out')
    _add_hyperparam_flags(plot)
    return parser


def resolve_config(args) -> CliConfig:
    """Flags override the config file, which overrides the defaults."""
    settings = dict(vars(args))
    if settings.get('seeds'):
        settings['seeds'] = [s for group in settings['seeds'] for s in group]
    flags = CliConfig(**{f.name: settings.get(f.name) for f in fields(CliConfig)})
    base = load_config(args.config) if args.config else CliConfig()
    return base.merged(flags).validate()


def _seeds(config: CliConfig, default) -> List[int]:
    if config.seeds:
        return list(config.seeds)
    if config.seed is not None:
        return [config.seed]
    return list(default)


def cmd_gen_instances(args, config: CliConfig):
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    rng = np.random.default_rng(config.value('seed', 0))
    instance_set = generate_dataset(args.n, rng, args.label, config.value('benchmark', 'pl'), config.value('dim', 1))
    save_instances(instance_set, config.out)


def cmd_train(args, config: CliConfig):
    spec = config.benchmark_spec()
    algo = config.value('algo', AgentKind.SAQL.value)
    out_dir = config.value('out', os.path.join(RUNS_DIR, algo))
    run = RunConfig(
        spec=spec,
        kind=algo,
        hyperparams=config.hyperparams(),
        episodes=config.value('episodes', default_episodes(spec.dim)),
        eval_interval=config.value('eval_interval', EVAL_INTERVAL),
        train_path=config.value('train_instances', TRAIN_INSTANCES),
        test_path=config.value('test_instances', TEST_INSTANCES),
        output_dir=out_dir,
    )
    seeds = _seeds(config, [0])
    result = multi_seed(run, seeds, workers=config.value('workers', 1))
    os.makedirs(out_dir, exist_ok=True)
    for seed_run in result.runs:
        seed_run.log.to_csv(os.path.join(out_dir, f'metrics_seed{seed_run.seed}.csv'))
        save_agent(seed_run.agent, os.path.join(out_dir, f'agent_seed{seed_run.seed}.npz'))
    if len(result.runs) > 1:
        write_csv(result.aggregate, os.path.join(out_dir, 'aggregate.csv'))
    logger.info(f"Wrote {len(result.runs)} run(s) to {out_dir}")


def cmd_eval(args, config: CliConfig):
    agent = load_agent(args.agent)
    test_set = load_instances(args.instances, label='test')
    mean, std = evaluate(agent, test_set)
    frame = pd.DataFrame({'eval_mean': [mean], 'eval_std': [std]})
    if config.out:
        write_csv(frame, config.out)
    else:
        frame.to_csv(sys.stdout, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def cmd_baseline(args, config: CliConfig):
    spec = config.benchmark_spec()
    report = baseline_report(spec, load_instances(args.instances, label='test'))
    if config.out:
        report.to_csv(config.out)
    else:
        report.to_frame().to_csv(sys.stdout, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def cmd_hpo(args, config: CliConfig):
    spec = config.benchmark_spec()
    algo = config.value('algo', AgentKind.SAQL.value)
    base = RunConfig(
        spec=spec,
        kind=algo,
        hyperparams=config.hyperparams(),
        episodes=config.value('episodes', default_episodes(spec.dim)),
        eval_interval=config.value('eval_interval', EVAL_INTERVAL),
        seed=config.value('seed', 0),
        train_path=config.value('train_instances', TRAIN_INSTANCES),
        test_path=config.value('test_instances', TEST_INSTANCES),
    )
    candidates = [Hyperparams.published(algo).as_dict()] if args.include_published else []
    table = random_search(algo, SearchSpace(), n_configs=args.n_configs,
                          seeds=config.seeds or range(HPO_SEEDS), base_config=base,
                          candidates=candidates, workers=config.value('workers', 1))
    save_search(table, config.value('out', os.path.join(TABLES_DIR, f'hpo_{algo}.csv')))


def cmd_export_plot_data(args, config: CliConfig):
    paths = (config.train_instances, config.test_instances)
    export_plot_data(
        args.figure,
        out_dir=config.value('out', os.path.join(ensure_output_dirs(), 'figures')),
        algos=args.algos,
        seeds=_seeds(config, [0]),
        episodes=config.episodes,
        eval_interval=config.value('eval_interval', EVAL_INTERVAL),
        n_instances=args.n_instances,
        train_path=paths[0],
        test_path=paths[1],
        render=args.render,
        workers=config.value('workers', 1),
        overrides=config.hyperparam_overrides(),
    )


COMMANDS = {
    'gen-instances': cmd_gen_instances,
    'train': cmd_train,
    'eval': cmd_eval,
    'baseline': cmd_baseline,
    'hpo': cmd_hpo,
    'export-plot-data': cmd_export_plot_data,
}


def run(argv=None) -> int:
    """Runs one subcommand and returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            set_log_level(logging.DEBUG)
        elif args.quiet:
            set_log_level(logging.WARNING)
        config = resolve_config(args)
        COMMANDS[args.command](args, config)
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        message = ' '.join(str(e).split()) or type(e).__name__
        print(f"candid: error[{category_of(e)}]: {message}", file=sys.stderr)
        return exit_code(e)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
