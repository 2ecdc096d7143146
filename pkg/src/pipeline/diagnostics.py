"""
Gradient Diagnostics

Runs the finite-difference suite over every differentiable primitive, the
SSIM loss, the three recurrent cells and the three solar nets. Each check
reduces its output to a scalar with a fixed random weighting so every
output component contributes to the gradient.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from src.cloud.cells import CellState, build_cell
from src.core.models import SolarNetSpec
from src.metrics.ssim import ssim_loss
from src.solar.nets import build_solar_net
from src.tensor.autodiff import Tensor, concat
from src.tensor.functional import conv1d, conv2d, dense, pool, softmax
from src.tensor.gradcheck import gradcheck_tensors


logger = logging.getLogger(__name__)

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_error: float
    passed: bool


def _weighted(out: Tensor, weights: np.ndarray) -> Tensor:
    return (out * Tensor(weights)).sum()


def _op_checks(rng: np.random.Generator) -> Dict[str, Tuple[Callable[[], Tensor], List[Tensor]]]:
    """name -> (scalar function, tensors it closes over)"""

    def t(*shape, low=-1.0, high=1.0):
        return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)

    def weighted(fn: Callable[[], Tensor], *shape: int) -> Callable[[], Tensor]:
        # drawn once so every finite-difference evaluation sees the same weights
        weights = rng.normal(size=shape)
        return lambda: _weighted(fn(), weights)

    a, b = t(3, 4), t(3, 4)
    pos = t(3, 4, low=0.5, high=1.5)
    x_dense, w_dense, b_dense = t(2, 4), t(3, 4), t(3)
    x2, k2, bias2 = t(2, 5, 5), t(3, 2, 3, 3), t(3)
    x2v, k2v = t(1, 6, 6), t(1, 1, 3, 3)
    x1, k1, bias1 = t(2, 6), t(3, 2, 3), t(3)
    x1e, k1e = t(2, 6), t(2, 2, 2)
    img = t(3, 4, 4)
    m1, m2 = t(2, 3), t(3, 4)
    wide = t(4, 5)
    clamp_in = Tensor(rng.choice([-1.0, 1.0], size=(3, 4)) * rng.uniform(0.1, 0.4, size=(3, 4))
                      + rng.choice([-1.0, 1.0], size=(3, 4)) * 0.6, requires_grad=True)
    small = t(2, 1, 3)

    return {
        "add": (weighted(lambda: a + b, 3, 4), [a, b]),
        "sub": (weighted(lambda: a - b, 3, 4), [a, b]),
        "mul": (weighted(lambda: a * b, 3, 4), [a, b]),
        "div": (weighted(lambda: a / pos, 3, 4), [a, pos]),
        "scale": (weighted(lambda: a * 2.5 + 1.0, 3, 4), [a]),
        "sigmoid": (weighted(lambda: a.sigmoid(), 3, 4), [a]),
        "tanh": (weighted(lambda: a.tanh(), 3, 4), [a]),
        "clamp": (weighted(lambda: clamp_in.clamp(-0.5, 0.5), 3, 4), [clamp_in]),
        "dense": (weighted(lambda: dense(x_dense, w_dense, b_dense), 2, 3), [x_dense, w_dense, b_dense]),
        "matmul": (weighted(lambda: m1 @ m2, 2, 4), [m1, m2]),
        "conv2d": (weighted(lambda: conv2d(x2, k2, bias2), 3, 5, 5), [x2, k2, bias2]),
        "conv2d_valid": (weighted(lambda: conv2d(x2v, k2v, padding="valid"), 1, 4, 4), [x2v, k2v]),
        "conv1d": (weighted(lambda: conv1d(x1, k1, bias1), 3, 6), [x1, k1, bias1]),
        "conv1d_edge": (weighted(lambda: conv1d(x1e, k1e, pad_mode="edge"), 2, 6), [x1e, k1e]),
        "pool_avg_spatial": (weighted(lambda: pool(img, "global_avg_spatial"), 3, 1, 1), [img]),
        "pool_max_spatial": (weighted(lambda: pool(img, "global_max_spatial"), 3, 1, 1), [img]),
        "pool_avg_channels": (weighted(lambda: pool(img, "avg_over_channels"), 1, 4, 4), [img]),
        "pool_max_channels": (weighted(lambda: pool(img, "max_over_channels"), 1, 4, 4), [img]),
        "softmax": (weighted(lambda: softmax(wide, axis=-2), 4, 5), [wide]),
        "reshape_transpose": (weighted(lambda: wide.reshape(5, 4).transpose(), 4, 5), [wide]),
        "getitem": (weighted(lambda: wide[1:3], 2, 5), [wide]),
        "concat": (weighted(lambda: concat([a, b], axis=0), 6, 4), [a, b]),
        "expand": (weighted(lambda: small.expand(2, 4, 3), 2, 4, 3), [small]),
        "sum_mean": (lambda: a.sum(axis=0).square().sum() + b.mean(), [a, b]),
    }


def _ssim_check(rng: np.random.Generator):
    pred = Tensor(rng.uniform(0.0, 1.0, size=(8, 8)), requires_grad=True)
    target = rng.uniform(0.0, 1.0, size=(8, 8))
    return lambda: ssim_loss(pred, target), [pred]


def _cell_check(cell_kind: str, rng: np.random.Generator):
    """One step of a 1-channel 4x4 cell from a random state"""
    cell = build_cell(cell_kind, 1, 2, 3, rng, cbam_reduction=1, cbam_kernel=3)
    x = Tensor(rng.uniform(0.0, 1.0, size=(1, 4, 4)), requires_grad=True)
    h = Tensor(rng.uniform(-0.5, 0.5, size=(2, 4, 4)), requires_grad=True)
    c = Tensor(rng.uniform(-0.5, 0.5, size=(2, 4, 4)), requires_grad=True)
    m = Tensor(rng.uniform(-0.5, 0.5, size=(2, 4, 4)), requires_grad=True) if cell_kind == "sa" else None
    weights = {key: rng.normal(size=(2, 4, 4)) for key in ("h", "c", "m")}

    def f() -> Tensor:
        out = cell(x, CellState(h=h, c=c, m=m))
        loss = _weighted(out.h, weights["h"]) + _weighted(out.c, weights["c"])
        if out.m is not None:
            loss = loss + _weighted(out.m, weights["m"])
        return loss

    tensors = [x, h, c] + ([m] if m is not None else []) + list(cell.parameters().values())
    return f, tensors


SOLAR_CHECK_SPECS = {
    "mlp": SolarNetSpec(kind="mlp", num_layers=2, units=4, epochs=100),
    "cnn1d": SolarNetSpec(kind="cnn1d", num_layers=1, units=32, kernel_size=2, epochs=500),
    "lstm": SolarNetSpec(kind="lstm", num_layers=1, units=32, epochs=500),
}


def _solar_check(kind: str, rng: np.random.Generator):
    """Loss gradient w.r.t. the net's input and output layers"""
    net = build_solar_net(SOLAR_CHECK_SPECS[kind])
    power = rng.uniform(0.0, 1.0, size=(3, 6))
    clouds = rng.uniform(0.0, 1.0, size=(3, 6))
    weights = rng.normal(size=(3, 6))
    params = net.parameters()
    names = [n for n in params if n.startswith(("dense0", "conv0", "lstm0_wx", "lstm0_b", "head"))]
    return lambda: _weighted(net(power, clouds), weights), [params[n] for n in names]


def run_gradcheck_suite(seed: int = 0, tolerance: float = TOLERANCE) -> List[CheckResult]:
    """
    Run every check; gradient errors of a single check mark it failed

    Returns:
        One result per check, in a fixed order
    """
    rng = np.random.default_rng(seed)
    checks = dict(_op_checks(rng))
    checks["ssim_loss"] = _ssim_check(rng)
    for kind in ("convlstm", "cbam", "sa"):
        checks[f"cell_{kind}"] = _cell_check(kind, rng)
    for kind in ("mlp", "cnn1d", "lstm"):
        checks[f"solar_{kind}"] = _solar_check(kind, rng)

    results = []
    for name, (f, tensors) in checks.items():
        error = gradcheck_tensors(f, tensors)
        passed = bool(np.isfinite(error) and error < tolerance)
        results.append(CheckResult(name, error, passed))
        marker = "✅" if passed else "❌"
        logger.info(f"{marker} gradcheck {name}: max relative error {error:.2e}")
    return results


def results_table(results: List[CheckResult]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"check": r.name, "max_rel_error": r.max_error, "passed": r.passed} for r in results]
    )
