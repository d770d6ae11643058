"""Feed-forward Q-networks in NumPy.

An MLP is a stack of affine layers with rectifiers between them (identity on
the output). Gradients of the squared TD loss are computed analytically, the
parameters are stepped with bias-corrected Adam, and each online network has a
target copy that is soft-updated on a fixed gradient-step cadence.
All arithmetic is float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from src.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, HIDDEN_SIZES
from src.errors import DomainError, NumericalError


@dataclass
class MLP:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DomainError("an MLP needs one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DomainError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise DomainError(f"layer {i} expects {w.shape[0]} inputs, previous layer gives {self.weights[i - 1].shape[1]}")

    @property
    def sizes(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def d_in(self) -> int:
        return self.sizes[0]

    @property
    def d_out(self) -> int:
        return self.sizes[-1]

    def params(self) -> List[np.ndarray]:
        """Parameter arrays in the order W1, b1, W2, b2, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> 'MLP':
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())


def mlp_parameter_count(sizes: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def init_mlp(d_in: int, d_out: int, rng: np.random.Generator, hidden: Sequence[int] = HIDDEN_SIZES) -> MLP:
    """Fan-in uniform weights U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
    if d_in < 1 or d_out < 1:
        raise DomainError(f"layer sizes must be >= 1, got d_in={d_in}, d_out={d_out}")
    sizes = (d_in, *hidden, d_out)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases)


def forward_trace(mlp: MLP, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Pre-activations and layer inputs of a batch pass; activations[0] is the input."""
    activations, preacts = [x], []
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = activations[-1] @ w + b
        preacts.append(z)
        if i < len(mlp.weights) - 1:
            activations.append(np.maximum(z, 0.0))
    return preacts, activations


def forward(mlp: MLP, x) -> np.ndarray:
    """Q-values for one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    if batch.ndim != 2 or batch.shape[1] != mlp.d_in:
        raise DomainError(f"input of shape {x.shape} does not match d_in={mlp.d_in}")
    preacts, _ = forward_trace(mlp, batch)
    out = preacts[-1]
    return out[0] if single else out


def loss_and_grad(mlp: MLP, inputs, actions, targets) -> Tuple[float, List[np.ndarray]]:
    """Mean squared error between targets and the selected Q-values, with exact gradients.

    Gradients are returned in `MLP.params()` order.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    actions = np.asarray(actions, dtype=int).reshape(-1)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    n = inputs.shape[0]
    if n == 0:
        raise DomainError("loss over an empty batch")
    if actions.shape[0] != n or targets.shape[0] != n:
        raise DomainError(f"batch of {n} inputs with {actions.shape[0]} actions and {targets.shape[0]} targets")
    if inputs.shape[1] != mlp.d_in:
        raise DomainError(f"inputs have {inputs.shape[1]} features, network expects {mlp.d_in}")
    if not np.isfinite(targets).all():
        raise DomainError("non-finite TD target")
    if (actions < 0).any() or (actions >= mlp.d_out).any():
        raise DomainError(f"action index outside [0, {mlp.d_out - 1}]")

    preacts, activations = forward_trace(mlp, inputs)
    rows = np.arange(n)
    residual = preacts[-1][rows, actions] - targets
    loss = float(np.mean(residual ** 2))

    # only the selected output entries receive gradient
    delta = np.zeros_like(preacts[-1])
    delta[rows, actions] = 2.0 * residual / n

    grads: List[np.ndarray] = []
    for i in range(len(mlp.weights) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(activations[i].T @ delta)
        if i:
            delta = (delta @ mlp.weights[i].T) * (preacts[i - 1] > 0.0)
    grads.reverse()
    return loss, grads


@dataclass
class AdamState:
    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)


def init_adam(mlp: MLP, lr: float) -> AdamState:
    if not lr > 0:
        raise DomainError(f"learning rate must be > 0, got {lr}")
    return AdamState(lr=lr, m=[np.zeros_like(p) for p in mlp.params()], v=[np.zeros_like(p) for p in mlp.params()])


def adam_step(mlp: MLP, grads: Sequence[np.ndarray], adam: AdamState) -> MLP:
    """Bias-corrected Adam update, applied in place. Non-finite input or output is rejected."""
    params = mlp.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise DomainError("gradient shapes do not match the network")
    if not all(np.isfinite(g).all() for g in grads):
        raise DomainError("non-finite gradient, update rejected")

    step = adam.step + 1
    correction1 = 1.0 - adam.beta1 ** step
    correction2 = 1.0 - adam.beta2 ** step
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, adam.m, adam.v):
        m = adam.beta1 * m + (1.0 - adam.beta1) * g
        v = adam.beta2 * v + (1.0 - adam.beta2) * g * g
        new_m.append(m)
        new_v.append(v)
        new_p.append(p - adam.lr * (m / correction1) / (np.sqrt(v / correction2) + adam.eps))
    if not all(np.isfinite(p).all() for p in new_p):
        raise NumericalError("Adam update produced non-finite parameters")

    for p, value in zip(params, new_p):
        p[...] = value
    adam.m, adam.v, adam.step = new_m, new_v, step
    return mlp


@dataclass
class TargetPair:
    online: MLP
    target: MLP
    adam: AdamState
    tau: float
    frequency: int
    grad_steps: int = 0

    def __post_init__(self):
        if self.online.sizes != self.target.sizes:
            raise DomainError(f"online {self.online.sizes} and target {self.target.sizes} shapes differ")
        if not 0.0 <= self.tau <= 1.0:
            raise DomainError(f"tau must lie in [0, 1], got {self.tau}")
        if self.frequency < 1:
            raise DomainError(f"target update frequency must be >= 1, got {self.frequency}")


def make_target_pair(d_in: int, d_out: int, rng: np.random.Generator, lr: float, tau: float,
                     frequency: int, hidden: Sequence[int] = HIDDEN_SIZES) -> TargetPair:
    online = init_mlp(d_in, d_out, rng, hidden)
    return TargetPair(online=online, target=online.copy(), adam=init_adam(online, lr), tau=tau, frequency=frequency)


def soft_update(pair: TargetPair) -> MLP:
    """theta_target <- tau * theta + (1 - tau) * theta_target, in place."""
    for target, online in zip(pair.target.params(), pair.online.params()):
        target *= 1.0 - pair.tau
        target += pair.tau * online
    return pair.target


def train_step(pair: TargetPair, inputs, actions, targets) -> float:
    """One gradient step on the online network; the soft update fires every `frequency` steps."""
    loss, grads = loss_and_grad(pair.online, inputs, actions, targets)
    adam_step(pair.online, grads, pair.adam)
    pair.grad_steps += 1
    if pair.grad_steps % pair.frequency == 0:
        soft_update(pair)
    return loss


def mlp_arrays(mlp: MLP, prefix: str = '') -> dict:
    return {f'{prefix}p{i}': p for i, p in enumerate(mlp.params())}


def mlp_from_arrays(arrays, prefix: str = '') -> MLP:
    params = []
    while f'{prefix}p{len(params)}' in arrays:
        params.append(np.array(arrays[f'{prefix}p{len(params)}'], dtype=float))
    if not params or len(params) % 2:
        raise DomainError(f"no complete parameter set under prefix {prefix!r}")
    return MLP(params[0::2], params[1::2])


def save_mlp(mlp: MLP, path) -> None:
    np.savez(path, **mlp_arrays(mlp))


def load_mlp(path) -> MLP:
    with np.load(path, allow_pickle=False) as arrays:
        return mlp_from_arrays(arrays)
