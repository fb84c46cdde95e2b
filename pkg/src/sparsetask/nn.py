"""Feed-forward multi-task network with a sparse input layer.

Forward and backward passes are written out by hand. Parameters are kept in
an ordered ``dict`` of named numpy arrays::

    trunk.0.weight  (input_dim, hidden[0])   applied to sparse X
    trunk.0.bias    (hidden[0],)
    trunk.k.weight  (hidden[k-1], hidden[k])
    ...
    class_head.weight / class_head.bias      (only with classification tasks)
    regr_head.weight  / regr_head.bias       (only with regression tasks)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import InvalidSpec, ShapeMismatch
from .sparse import CsrMatrix, spmm_dense, spmm_transpose_dense

ACTIVATIONS = ("relu", "tanh")

Gradients = Dict[str, np.ndarray]


@dataclass(frozen=True)
class NetworkArchitecture:
    input_dim: int
    hidden_sizes: tuple
    n_class_tasks: int = 0
    n_regr_tasks: int = 0
    trunk_dropout: float = 0.0
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1:
            raise InvalidSpec(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise InvalidSpec(f"need at least one hidden layer of size >= 1, got {self.hidden_sizes}")
        if self.n_class_tasks < 0 or self.n_regr_tasks < 0 or self.n_class_tasks + self.n_regr_tasks < 1:
            raise InvalidSpec("network needs at least one classification or regression task")
        if not 0.0 <= self.trunk_dropout < 1.0:
            raise InvalidSpec(f"trunk_dropout must be in [0, 1), got {self.trunk_dropout}")
        if self.activation not in ACTIVATIONS:
            raise InvalidSpec(f"unknown activation {self.activation!r}")

    def tensor_shapes(self) -> Dict[str, tuple]:
        shapes = {}
        fan_in = self.input_dim
        for k, h in enumerate(self.hidden_sizes):
            shapes[f"trunk.{k}.weight"] = (fan_in, h)
            shapes[f"trunk.{k}.bias"] = (h,)
            fan_in = h
        if self.n_class_tasks:
            shapes["class_head.weight"] = (fan_in, self.n_class_tasks)
            shapes["class_head.bias"] = (self.n_class_tasks,)
        if self.n_regr_tasks:
            shapes["regr_head.weight"] = (fan_in, self.n_regr_tasks)
            shapes["regr_head.bias"] = (self.n_regr_tasks,)
        return shapes


@dataclass
class ParameterSet:
    arch: NetworkArchitecture
    tensors: Dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def copy(self) -> ParameterSet:
        return ParameterSet(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> Gradients:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}


@dataclass
class ForwardTrace:
    x: CsrMatrix
    pre_activations: List[np.ndarray] = field(default_factory=list)
    activations: List[np.ndarray] = field(default_factory=list)
    # inverted-dropout multipliers (0 or 1/(1-p)); None where dropout was off
    dropout_masks: List[Optional[np.ndarray]] = field(default_factory=list)


def init_parameters(arch: NetworkArchitecture, seed) -> ParameterSet:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in arch.tensor_shapes().items():
        if name.endswith(".weight"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return ParameterSet(arch, tensors)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # a is the activation before dropout
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def forward(params: ParameterSet, x: CsrMatrix, mode: str = "eval", rng=None):
    """Returns ``(class_logits, regr_outputs, trace)``.

    Dropout is applied after every trunk activation in ``"train"`` mode only.
    Heads missing from the architecture yield arrays with zero columns.
    """
    arch = params.arch
    if x.n_cols != arch.input_dim:
        raise ShapeMismatch(f"input has {x.n_cols} columns, network expects {arch.input_dim}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    p = arch.trunk_dropout
    use_dropout = mode == "train" and p > 0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout needs an rng")

    trace = ForwardTrace(x)
    h = None
    for k in range(len(arch.hidden_sizes)):
        w, b = params[f"trunk.{k}.weight"], params[f"trunk.{k}.bias"]
        z = (spmm_dense(x, w) if k == 0 else h @ w) + b
        a = _act(arch.activation, z)
        trace.pre_activations.append(z)
        if use_dropout:
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            h = a * mask
        else:
            mask = None
            h = a
        trace.activations.append(a)
        trace.dropout_masks.append(mask)

    n = x.n_rows
    if arch.n_class_tasks:
        class_logits = h @ params["class_head.weight"] + params["class_head.bias"]
    else:
        class_logits = np.zeros((n, 0))
    if arch.n_regr_tasks:
        regr_out = h @ params["regr_head.weight"] + params["regr_head.bias"]
    else:
        regr_out = np.zeros((n, 0))
    return class_logits, regr_out, trace


def _trunk_output(trace: ForwardTrace, k: int) -> np.ndarray:
    a, mask = trace.activations[k], trace.dropout_masks[k]
    return a if mask is None else a * mask


def backward(params: ParameterSet, trace: ForwardTrace, grad_class, grad_regr) -> Gradients:
    """Reverse-mode gradients of the network outputs w.r.t. every tensor."""
    arch = params.arch
    n = trace.x.n_rows
    grad_class = np.asarray(grad_class, dtype=np.float64)
    grad_regr = np.asarray(grad_regr, dtype=np.float64)
    if grad_class.shape != (n, arch.n_class_tasks) or grad_regr.shape != (n, arch.n_regr_tasks):
        raise ShapeMismatch(
            f"upstream gradients {grad_class.shape}/{grad_regr.shape} do not match "
            f"({n}, {arch.n_class_tasks})/({n}, {arch.n_regr_tasks})"
        )
    depth = len(arch.hidden_sizes)
    h = _trunk_output(trace, depth - 1)
    grads: Gradients = {}
    gh = np.zeros_like(h)
    for head, g in (("class_head", grad_class), ("regr_head", grad_regr)):
        if g.shape[1] == 0:
            continue
        grads[f"{head}.weight"] = h.T @ g
        grads[f"{head}.bias"] = g.sum(axis=0)
        gh += g @ params[f"{head}.weight"].T

    for k in reversed(range(depth)):
        mask = trace.dropout_masks[k]
        ga = gh if mask is None else gh * mask
        gz = ga * _act_grad(arch.activation, trace.pre_activations[k], trace.activations[k])
        if k == 0:
            grads["trunk.0.weight"] = spmm_transpose_dense(trace.x, gz)
        else:
            grads[f"trunk.{k}.weight"] = _trunk_output(trace, k - 1).T @ gz
            gh = gz @ params[f"trunk.{k}.weight"].T
        grads[f"trunk.{k}.bias"] = gz.sum(axis=0)
    return {name: grads[name] for name in params.tensors}
