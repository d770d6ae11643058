import logging
import os
import sys

from matplotlib.ticker import FuncFormatter

# Reals in every emitted CSV round-trip exactly
CSV_FLOAT_FORMAT = '%.17g'


def setup_logger(name="CandidWorkbench"):
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.setLevel(logging.INFO)
        handler = logging.StreamHandler(sys.stderr)
        formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s', datefmt='%H:%M:%S')
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    return logger


def set_log_level(level):
    """Applies a level to every workbench logger created so far."""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if isinstance(logger, logging.Logger) and logger.handlers and name.startswith('Candid'):
            logger.setLevel(level)


def format_episodes(x, pos):
    if x >= 1000:
        return f'{x/1000:.0f}k'
    return f'{x:.0f}'


episode_formatter = FuncFormatter(format_episodes)


def write_csv(df, path):
    """LF-terminated CSV with exact reals; parent directories are created."""
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    return path
