import copy
import os
from pathlib import Path

# Base dir is the parent of the directory containing this config file (src) -> root
BASE_DIR = Path(__file__).resolve().parent.parent

# Instance datasets (one train + one test file serve every experiment)
DATA_DIR = os.path.join(BASE_DIR, 'data')
TRAIN_INSTANCES = os.path.join(DATA_DIR, 'pl_train.csv')
TEST_INSTANCES = os.path.join(DATA_DIR, 'pl_test.csv')

# Output directories
OUTPUTS_DIR = os.path.join(BASE_DIR, 'outputs')
FIGURES_DIR = os.path.join(OUTPUTS_DIR, 'figures')
TABLES_DIR = os.path.join(OUTPUTS_DIR, 'tables')
RUNS_DIR = os.path.join(OUTPUTS_DIR, 'runs')

# Benchmark
N_INSTANCES = 300
DEFAULT_C = 4.6
DEFAULT_HORIZON = 10
DEFAULT_IMPORTANCE_DECAY = 0.5
PL_X_MAX = 9.0

# Q-networks
HIDDEN_SIZES = (120, 84)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Training
BUFFER_SIZE = 2500
EPSILON_END = 0.01
EXPLORATION_FRACTION = 0.5
EVAL_INTERVAL = 100
DEFAULT_EPISODES = {2: 20000, 5: 30000, 10: 30000}

# Random search
HPO_N_CONFIGS = 100
HPO_SEEDS = 10

# Exact oracles refuse grids beyond this many joint actions
MAX_JOINT_ACTIONS = 10 ** 6

# Published per-algorithm hyperparameters (tuned on 5D Sigmoid)
HYPERPARAMS = {
    'ddqn': {
        'lr': 1.0076e-4,
        'gamma': 0.9349,
        'epsilon_start': 0.2382,
        'target_frequency': 15,
        'tau': 0.2613,
        'batch_size': 220,
    },
    'iql': {
        'lr': 3.2680e-5,
        'gamma': 0.9147,
        'epsilon_start': 0.9289,
        'target_frequency': 39,
        'tau': 0.1258,
        'batch_size': 63,
    },
    'saql': {
        'lr': 7.7590e-5,
        'gamma': 0.9086,
        'epsilon_start': 0.4607,
        'target_frequency': 12,
        'tau': 0.6196,
        'batch_size': 67,
    },
    'simsdqn': {
        'lr': 3.0855e-4,
        'gamma': 0.9696,
        'epsilon_start': 0.1341,
        'target_frequency': 33,
        'tau': 0.4765,
        'batch_size': 105,
    },
}


def get_hyperparams(kind):
    """Get a copy of the published hyperparameters for an algorithm."""
    return copy.deepcopy(HYPERPARAMS[str(kind).lower()])


def default_episodes(dim):
    if dim in DEFAULT_EPISODES:
        return DEFAULT_EPISODES[dim]
    return DEFAULT_EPISODES[2] if dim <= 2 else DEFAULT_EPISODES[5]


def ensure_output_dirs(base=OUTPUTS_DIR):
    for d in [base, os.path.join(base, 'figures'), os.path.join(base, 'tables'), os.path.join(base, 'runs')]:
        os.makedirs(d, exist_ok=True)
    return base
