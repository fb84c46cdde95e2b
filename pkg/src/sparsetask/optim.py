"""SGD and Adam with L2 weight decay coupled into the gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import InvalidSpec, NonFiniteGradient, ShapeMismatch
from .nn import Gradients, ParameterSet


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise InvalidSpec(f"unknown optimizer {self.kind!r}")
        if not self.learning_rate > 0:
            raise InvalidSpec("learning_rate must be positive")
        if not self.weight_decay >= 0:
            raise InvalidSpec("weight_decay must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidSpec("beta1 and beta2 must be in [0, 1)")
        if not self.epsilon > 0:
            raise InvalidSpec("epsilon must be positive")


@dataclass
class OptimizerState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> OptimizerState:
        return OptimizerState(self.step, {k: a.copy() for k, a in self.m.items()},
                              {k: a.copy() for k, a in self.v.items()})


def apply_weight_decay_policy(params: ParameterSet) -> Dict[str, bool]:
    """Which tensors receive weight decay: every weight matrix, no bias."""
    return {name: name.endswith(".weight") for name in params.tensors}


def step(params: ParameterSet, grads: Gradients, state: OptimizerState, cfg: OptimizerConfig,
         inplace: bool = False):
    """One update. Returns ``(params, state)``; with ``inplace=False`` the
    inputs are left untouched and fresh objects are returned."""
    if set(grads) != set(params.tensors):
        raise ShapeMismatch("gradient names do not match parameter names")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in {name}")
    if not inplace:
        params, state = params.copy(), state.copy()

    decay = apply_weight_decay_policy(params)
    t = state.step + 1
    for name, theta in params.tensors.items():
        g = grads[name]
        if cfg.weight_decay and decay[name]:
            g = g + cfg.weight_decay * theta
        if cfg.kind == "sgd":
            theta -= cfg.learning_rate * g
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        theta -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    state.step = t
    return params, state
