"""
Finite-difference Gradient Checking

Compares reverse-mode gradients with central differences, component by
component. The relative error of a component is

    |analytic - numeric| / max(|analytic|, |numeric|, floor)

where `floor` keeps components whose true derivative is 0 from turning
round-off into huge ratios.
"""

import logging
from typing import Callable, Dict, Sequence

import numpy as np

from src.core.exceptions import GradientError
from src.tensor.autodiff import Tensor


logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_FLOOR = 1e-4


def _scalar(value: Tensor) -> float:
    if value.size != 1:
        raise GradientError(f"gradcheck needs a scalar function, got shape {value.shape}")
    out = value.item()
    if not np.isfinite(out):
        raise GradientError(f"gradcheck: function value is not finite ({out})")
    return out


def gradcheck_tensors(
    f: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    step: float = DEFAULT_STEP,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """
    Check d f() / d t for every tensor t that f closes over

    The tensors' data arrays are swapped for perturbed copies during the
    check and restored afterwards, together with their requires_grad flags
    and gradients.

    Returns:
        Maximum relative error over all components of all tensors

    Raises:
        GradientError: If f or any gradient is non-finite
    """
    saved = [(t.requires_grad, t.grad) for t in tensors]
    try:
        for t in tensors:
            t.requires_grad = True
            t.zero_grad()
        _scalar(f_out := f())
        f_out.backward()
        analytic = [t.grad.copy() if t.grad is not None else np.zeros(t.shape) for t in tensors]

        worst = 0.0
        for t, grad in zip(tensors, analytic):
            if not np.all(np.isfinite(grad)):
                raise GradientError(f"gradcheck: non-finite analytic gradient for {t!r}")
            original = t.data
            flat = original.reshape(-1)
            try:
                for i in range(flat.size):
                    plus = flat.copy()
                    plus[i] += step
                    t.data = plus.reshape(original.shape)
                    f_plus = _scalar(f())
                    minus = flat.copy()
                    minus[i] -= step
                    t.data = minus.reshape(original.shape)
                    f_minus = _scalar(f())

                    numeric = (f_plus - f_minus) / (2.0 * step)
                    a = grad.reshape(-1)[i]
                    err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
                    worst = max(worst, err)
            finally:
                t.data = original
        return worst
    finally:
        for t, (requires_grad, grad) in zip(tensors, saved):
            t.requires_grad = requires_grad
            t.grad = grad


def gradcheck(
    f: Callable[[Tensor], Tensor],
    point: Tensor,
    step: float = DEFAULT_STEP,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """
    Max relative error between backward and central differences of f at point

    Example:
        >>> gradcheck(lambda x: (x * 3.0).sum(), Tensor([1.0, 2.0])) < 1e-9
        True
    """
    x = Tensor(point.data.copy(), requires_grad=True)
    return gradcheck_tensors(lambda: f(x), [x], step=step, floor=floor)


def gradcheck_module(
    loss_fn: Callable[[], Tensor],
    parameters: Dict[str, Tensor],
    step: float = DEFAULT_STEP,
    floor: float = DEFAULT_FLOOR,
) -> Dict[str, float]:
    """Per-parameter maximum relative error for a model loss"""
    report = {}
    for name, param in parameters.items():
        report[name] = gradcheck_tensors(loss_fn, [param], step=step, floor=floor)
        logger.debug(f"gradcheck {name}: {report[name]:.2e}")
    return report
