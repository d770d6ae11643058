"""Benchmark instances: sampling, persistence and target evaluation.

A Piecewise Linear instance is a 2-segment function on [0, 9] through a fixed
start point, a sampled intermediate point (x, y) and a fixed end point; the
direction bit picks increasing (0,0)->(9,1) or decreasing (0,1)->(9,0).
A Sigmoid instance holds one (shift, slope) pair per action dimension.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterator, Tuple, Union

import numpy as np
import pandas as pd

from src.config import PL_X_MAX
from src.errors import DomainError, InstanceFileError
from src.utils import setup_logger, write_csv

logger = setup_logger("CandidInstances")

PL_COLUMNS = ['id', 'x', 'y', 'b']
LABELS = ('train', 'test')


@dataclass(frozen=True)
class PLInstance:
    id: int
    x: float
    y: float
    b: int

    def __post_init__(self):
        if not 0.0 <= self.x <= PL_X_MAX:
            raise DomainError(f"x={self.x} outside [0, {PL_X_MAX:g}]")
        if not 0.0 <= self.y <= 1.0:
            raise DomainError(f"y={self.y} outside [0, 1]")
        if self.b not in (0, 1):
            raise DomainError(f"b={self.b} is not a bit")

    @property
    def endpoints(self) -> Tuple[float, float]:
        return (0.0, 1.0) if self.b == 1 else (1.0, 0.0)

    def features(self) -> Tuple[float, ...]:
        return (self.x, self.y, float(self.b))


@dataclass(frozen=True)
class SigmoidInstance:
    id: int
    shifts: Tuple[float, ...]
    slopes: Tuple[float, ...]

    def __post_init__(self):
        if len(self.shifts) != len(self.slopes) or not self.shifts:
            raise DomainError("a Sigmoid instance needs M >= 1 (shift, slope) pairs")

    @property
    def dim(self) -> int:
        return len(self.shifts)

    def features(self) -> Tuple[float, ...]:
        flat = []
        for shift, slope in zip(self.shifts, self.slopes):
            flat.extend((shift, slope))
        return tuple(flat)


Instance = Union[PLInstance, SigmoidInstance]


@dataclass(frozen=True)
class InstanceSet:
    instances: Tuple[Instance, ...]
    label: str = 'train'

    def __post_init__(self):
        if self.label not in LABELS:
            raise DomainError(f"label must be one of {LABELS}, got {self.label!r}")
        ids = [inst.id for inst in self.instances]
        if ids != list(range(len(ids))):
            raise DomainError("instance ids must be unique and contiguous from 0")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Instance]:
        return iter(self.instances)

    def __getitem__(self, index) -> Instance:
        return self.instances[index]

    @property
    def kind(self) -> str:
        if self.instances and isinstance(self.instances[0], SigmoidInstance):
            return 'sigmoid'
        return 'pl'


def sample_pl_instance(rng: np.random.Generator, id: int) -> PLInstance:
    # Intermediate point first, then the direction coin flip
    x = float(rng.uniform(0.0, PL_X_MAX))
    y = float(rng.uniform(0.0, 1.0))
    b = int(rng.integers(0, 2))
    return PLInstance(id=id, x=x, y=y, b=b)


def pl_value(inst: PLInstance, t: float) -> float:
    """Target value of the piecewise linear function at time step t."""
    if not 0 <= t <= PL_X_MAX:
        raise DomainError(f"t={t} outside [0, {PL_X_MAX:g}]")
    y0, y9 = inst.endpoints
    if t <= inst.x:
        if inst.x == 0.0:
            return inst.y
        return y0 + (t / inst.x) * (inst.y - y0)
    return inst.y + ((t - inst.x) / (PL_X_MAX - inst.x)) * (y9 - inst.y)


def sample_sigmoid_instance(rng: np.random.Generator, dim: int, id: int = 0) -> SigmoidInstance:
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    shifts = rng.uniform(0.0, 10.0, size=dim)
    signs = rng.choice(np.array([-1.0, 1.0]), size=dim)
    magnitudes = rng.uniform(0.5, 2.5, size=dim)
    return SigmoidInstance(
        id=id,
        shifts=tuple(float(s) for s in shifts),
        slopes=tuple(float(s) for s in signs * magnitudes),
    )


def generate_dataset(n: int, rng: np.random.Generator, label: str = 'train',
                     kind: str = 'pl', dim: int = 1) -> InstanceSet:
    if n < 1:
        raise DomainError(f"dataset size must be >= 1, got {n}")
    if kind == 'pl':
        instances = tuple(sample_pl_instance(rng, i) for i in range(n))
    elif kind == 'sigmoid':
        instances = tuple(sample_sigmoid_instance(rng, dim, i) for i in range(n))
    else:
        raise DomainError(f"unknown benchmark kind {kind!r}")
    logger.info(f"Generated {n} {kind} instances ({label})")
    return InstanceSet(instances, label)


def to_frame(instance_set: InstanceSet) -> pd.DataFrame:
    if instance_set.kind == 'pl':
        rows = [(inst.id, inst.x, inst.y, inst.b) for inst in instance_set]
        return pd.DataFrame(rows, columns=PL_COLUMNS)
    dim = instance_set[0].dim
    columns = _sigmoid_columns(dim)
    rows = [(inst.id, *inst.features()) for inst in instance_set]
    return pd.DataFrame(rows, columns=columns)


def save_instances(instance_set: InstanceSet, path) -> None:
    write_csv(to_frame(instance_set), path)
    logger.info(f"Saved {len(instance_set)} instances to {path}")


def _parse_rows(df: pd.DataFrame, path) -> np.ndarray:
    # float() on the raw text keeps the %.17g round trip exact
    values = np.empty(df.shape, dtype=float)
    for row, record in enumerate(df.itertuples(index=False)):
        try:
            values[row] = [float(cell) for cell in record]
        except ValueError:
            raise InstanceFileError("non-numeric or missing value", path, line=row + 2) from None
        if not np.isfinite(values[row]).all():
            raise InstanceFileError("non-finite value", path, line=row + 2)
        if values[row, 0] != row:
            raise InstanceFileError(f"id {values[row, 0]:g} breaks the contiguous sequence (expected {row})",
                                    path, line=row + 2)
    return values


def _sigmoid_columns(dim: int):
    return ['id'] + [f'{name}_{m}' for m in range(1, dim + 1) for name in ('shift', 'slope')]


def _read_text(path) -> str:
    """Decode and shape-check the file so every later error maps to a physical line."""
    with open(path, 'rb') as f:
        raw_lines = f.read().split(b'\n')
    lines = []
    for number, raw in enumerate(raw_lines, start=1):
        try:
            lines.append(raw.decode('utf-8').rstrip('\r'))
        except UnicodeDecodeError as e:
            raise InstanceFileError(f"invalid UTF-8 ({e.reason})", path, line=number) from None
    # the piece after a terminating newline is not a line
    if lines and lines[-1] == '':
        lines.pop()
    if lines:
        n_fields = len(lines[0].split(','))
        for number, line in enumerate(lines[1:], start=2):
            if not line.strip():
                raise InstanceFileError("blank line", path, line=number)
            found = len(line.split(','))
            if found != n_fields:
                raise InstanceFileError(f"expected {n_fields} fields, found {found}", path, line=number)
    return ''.join(line + '\n' for line in lines)


def load_instances(path, label: str = 'train') -> InstanceSet:
    logger.info(f"Loading instances from {path}...")
    text = _read_text(path)
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False, skip_blank_lines=False,
                         index_col=False)
    except pd.errors.EmptyDataError:
        raise InstanceFileError("empty file, no header row", path, line=1) from None
    except pd.errors.ParserError as e:
        raise InstanceFileError(f"unparseable CSV ({e})", path) from None

    columns = [c.strip() for c in df.columns]
    is_pl = columns == PL_COLUMNS
    is_sigmoid = len(columns) >= 3 and len(columns) % 2 == 1 and columns == _sigmoid_columns((len(columns) - 1) // 2)
    if not (is_pl or is_sigmoid):
        raise InstanceFileError(f"unexpected header {','.join(columns)}", path, line=1)
    if df.empty:
        raise InstanceFileError("instance set is empty", path, line=2)

    values = _parse_rows(df, path)
    instances = []
    for row, record in enumerate(values):
        try:
            if is_pl:
                b = int(record[3]) if float(record[3]).is_integer() else float(record[3])
                instances.append(PLInstance(id=row, x=float(record[1]), y=float(record[2]), b=b))
            else:
                instances.append(SigmoidInstance(id=row, shifts=tuple(float(v) for v in record[1::2]),
                                                 slopes=tuple(float(v) for v in record[2::2])))
        except DomainError as e:
            raise InstanceFileError(f"range violation: {e}", path, line=row + 2) from None

    logger.info(f"Loaded {len(instances)} instances ({label})")
    return InstanceSet(tuple(instances), label)
