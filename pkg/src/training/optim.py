"""
Adam Optimizer

Canonical bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8). The
moment buffers live in an `OptimizerState` keyed by parameter name, in
the parameter registration order of the model.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from src.core.exceptions import TrainingError
from src.tensor.autodiff import Tensor


logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    """First/second moments per parameter, step counter and current learning rate"""
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: OptimizerState,
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
) -> Dict[str, np.ndarray]:
    """
    One Adam update

    Args:
        state: Optimizer state, updated in place
        params: Current parameter values
        grads: Gradients per parameter name (None counts as zero)

    Returns:
        New parameter values

    Raises:
        TrainingError: If any gradient is non-finite; state is left untouched

    Example:
        >>> s = OptimizerState(lr=0.1)
        >>> adam_step(s, {"w": np.array([1.0])}, {"w": np.array([2.0])})["w"]
        array([0.9])
    """
    dense_grads = {}
    for name, value in params.items():
        grad = grads.get(name)
        grad = np.zeros_like(value) if grad is None else np.asarray(grad, dtype=np.float64)
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"Non-finite gradient for parameter {name!r} at step {state.step + 1}")
        dense_grads[name] = grad

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t

    updated = {}
    for name, value in params.items():
        g = dense_grads[name]
        m = state.m.get(name, np.zeros_like(value))
        v = state.v.get(name, np.zeros_like(value))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated


class Adam:
    """
    Adam over a model's parameter tensors

    Example:
        opt = Adam(model.parameters(), lr=1e-3)
        loss.backward()
        opt.step()
        opt.zero_grad()
    """

    def __init__(self, parameters: Mapping[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.parameters = dict(parameters)
        self.state = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def step(self) -> None:
        values = {name: p.data for name, p in self.parameters.items()}
        grads = {name: p.grad for name, p in self.parameters.items()}
        for name, value in adam_step(self.state, values, grads).items():
            self.parameters[name].data = value

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.zero_grad()
