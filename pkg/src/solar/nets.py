"""
Solar Power Forecasting Networks

Each net maps the past hour of power (6 steps, divided by site capacity)
and, in the cloud lineage, the 6 horizon cloud pixels (divided by 255) to
the next 6 normalised power values.

Input arrangement per kind:
    mlp    flat vector of 12 (or 6) features
    cnn1d  channels x time, 2 x 6 (or 1 x 6)
    lstm   time x features, 6 x 2 (or 6 x 1)
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import ConfigurationError, ScenarioMismatchError, ShapeError
from src.core.models import SolarNetSpec
from src.tensor.autodiff import Tensor
from src.tensor.checkpoint import load_architecture, load_checkpoint, save_checkpoint
from src.tensor.functional import conv1d, dense, dropout
from src.tensor.module import Module, uniform_init


logger = logging.getLogger(__name__)

HORIZON = 6
HISTORY = 6


def persistence_power(past_power: Sequence[float], horizon: int = HORIZON) -> np.ndarray:
    """
    Repeat the last observed power value over the horizon

    Example:
        >>> persistence_power([0.1, 0.4]).tolist()
        [0.4, 0.4, 0.4, 0.4, 0.4, 0.4]
    """
    past = np.asarray(past_power, dtype=np.float64)
    if past.size == 0:
        raise ShapeError("persistence_power needs at least one observed value")
    return np.full(horizon, past.reshape(-1)[-1])


class SolarNet(Module):
    """
    Base class: input checks, checkpoint I/O and the shared forward contract

    `forward(past_power, clouds)` accepts [6] or [B, 6] arrays and returns a
    Tensor of matching leading shape with 6 outputs.
    """

    kind = ""

    def __init__(self, spec: SolarNetSpec):
        super().__init__()
        if spec.kind != self.kind:
            raise ConfigurationError(f"{type(self).__name__} built from a {spec.kind} spec")
        if spec.units < 1:
            raise ConfigurationError("units must be >= 1")
        if spec.num_layers < 1:
            raise ConfigurationError("num_layers must be >= 1")
        self.spec = spec
        self.n_features = 2 if spec.with_clouds else 1
        self.rng = np.random.default_rng(spec.seed)

    def _series(self, past_power, clouds) -> Tuple[np.ndarray, bool]:
        """Stack inputs to [B, 6, F]"""
        if self.spec.with_clouds and clouds is None:
            raise ScenarioMismatchError("net was trained with clouds but no cloud input was given")
        if not self.spec.with_clouds and clouds is not None:
            raise ScenarioMismatchError("net was trained without clouds but a cloud input was given")
        power = np.asarray(past_power, dtype=np.float64)
        single = power.ndim == 1
        power = power.reshape(-1, HISTORY) if single else power
        columns = [power]
        if clouds is not None:
            cloud = np.asarray(clouds, dtype=np.float64)
            cloud = cloud.reshape(-1, HORIZON) if cloud.ndim == 1 else cloud
            if cloud.shape != power.shape:
                raise ShapeError(f"cloud input {cloud.shape} does not match power {power.shape}")
            columns.append(cloud)
        if power.shape[-1] != HISTORY:
            raise ShapeError(f"expected {HISTORY} past power values, got {power.shape[-1]}")
        return np.stack(columns, axis=-1), single

    def forward(self, past_power, clouds=None, train: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        series, single = self._series(past_power, clouds)
        out = self._forward(series, train, rng)
        return out.reshape(HORIZON) if single else out

    __call__ = forward

    def _forward(self, series: np.ndarray, train: bool, rng: Optional[np.random.Generator]) -> Tensor:
        raise NotImplementedError

    def architecture(self) -> dict:
        return {"type": "solar_net", "spec": self.spec.model_dump()}

    def save(self, path: Path, meta: Optional[dict] = None) -> Path:
        return save_checkpoint(path, self.parameters(), self.architecture(), meta)


class MLPNet(SolarNet):
    """Feed-forward stack: (dense -> ReLU -> dropout) x L, linear 6-wide head"""

    kind = "mlp"

    def __init__(self, spec: SolarNetSpec):
        super().__init__(spec)
        width = HISTORY * self.n_features
        self.hidden: List[Tuple[Tensor, Tensor]] = []
        for layer in range(spec.num_layers):
            w = self.add_param(f"dense{layer}_w", uniform_init(self.rng, (spec.units, width), width))
            b = self.add_param(f"dense{layer}_b", uniform_init(self.rng, (spec.units,), width))
            self.hidden.append((w, b))
            width = spec.units
        self.head_w = self.add_param("head_w", uniform_init(self.rng, (HORIZON, width), width))
        self.head_b = self.add_param("head_b", uniform_init(self.rng, (HORIZON,), width))

    def _forward(self, series, train, rng):
        # power features first, then cloud features
        x = Tensor(np.concatenate([series[..., f] for f in range(series.shape[-1])], axis=-1))
        for w, b in self.hidden:
            x = dropout(dense(x, w, b).relu(), self.spec.dropout, rng, train)
        return dense(x, self.head_w, self.head_b)


class CNN1dNet(SolarNet):
    """
    Temporal convolution stack with a global-average + affine head

    Convolutions pad by repeating edge samples, so a constant series keeps
    time-constant features through every layer.
    """

    kind = "cnn1d"

    def __init__(self, spec: SolarNetSpec):
        super().__init__(spec)
        if spec.kernel_size > HISTORY:
            raise ConfigurationError(f"kernel_size {spec.kernel_size} longer than the {HISTORY}-step input")
        channels = self.n_features
        self.convs: List[Tuple[Tensor, Tensor]] = []
        for layer in range(spec.num_layers):
            fan_in = channels * spec.kernel_size
            w = self.add_param(f"conv{layer}_w", uniform_init(self.rng, (spec.units, channels, spec.kernel_size), fan_in))
            b = self.add_param(f"conv{layer}_b", uniform_init(self.rng, (spec.units,), fan_in))
            self.convs.append((w, b))
            channels = spec.units
        self.head_w = self.add_param("head_w", uniform_init(self.rng, (HORIZON, channels), channels))
        self.head_b = self.add_param("head_b", uniform_init(self.rng, (HORIZON,), channels))

    def features(self, series: np.ndarray, train: bool = False,
                 rng: Optional[np.random.Generator] = None) -> Tensor:
        """Conv stack output [B, units, 6] before temporal pooling"""
        x = Tensor(np.swapaxes(series, 1, 2))
        for w, b in self.convs:
            x = conv1d(x, w, b, pad_mode="edge").relu()
            x = dropout(x, self.spec.dropout, rng, train)
        return x

    def _forward(self, series, train, rng):
        pooled = self.features(series, train, rng).mean(axis=-1)
        return dense(pooled, self.head_w, self.head_b)


class LSTMNet(SolarNet):
    """Stacked LSTM over the 6 steps; last top-layer hidden state -> affine head"""

    kind = "lstm"

    def __init__(self, spec: SolarNetSpec):
        super().__init__(spec)
        n = spec.units
        width = self.n_features
        self.layers: List[Tuple[Tensor, Tensor, Tensor]] = []
        for layer in range(spec.num_layers):
            wx = self.add_param(f"lstm{layer}_wx", uniform_init(self.rng, (4 * n, width), width))
            wh = self.add_param(f"lstm{layer}_wh", uniform_init(self.rng, (4 * n, n), n))
            b = self.add_param(f"lstm{layer}_b", uniform_init(self.rng, (4 * n,), n))
            self.layers.append((wx, wh, b))
            width = n
        self.head_w = self.add_param("head_w", uniform_init(self.rng, (HORIZON, n), n))
        self.head_b = self.add_param("head_b", uniform_init(self.rng, (HORIZON,), n))

    def run_layers(self, series: np.ndarray) -> List[List[Tensor]]:
        """Hidden states per layer and step, each [B, units]"""
        n = self.spec.units
        batch, steps, _ = series.shape
        inputs = [Tensor(series[:, t, :]) for t in range(steps)]
        history = []
        for wx, wh, b in self.layers:
            h = Tensor(np.zeros((batch, n)))
            c = Tensor(np.zeros((batch, n)))
            outputs = []
            for x in inputs:
                gates = dense(x, wx, b) + dense(h, wh)
                i = gates[:, 0:n].sigmoid()
                f = gates[:, n:2 * n].sigmoid()
                o = gates[:, 2 * n:3 * n].sigmoid()
                g = gates[:, 3 * n:4 * n].tanh()
                c = i * g + f * c
                h = o * c.tanh()
                outputs.append(h)
            history.append(outputs)
            inputs = outputs
        return history

    def _forward(self, series, train, rng):
        last = self.run_layers(series)[-1][-1]
        return dense(last, self.head_w, self.head_b)


NETS = {"mlp": MLPNet, "cnn1d": CNN1dNet, "lstm": LSTMNet}


def build_solar_net(spec: SolarNetSpec) -> SolarNet:
    """
    Example:
        >>> net = build_solar_net(SolarNetSpec(kind="lstm", units=32, epochs=500))
        >>> net(np.zeros(6), np.zeros(6)).shape
        (6,)
    """
    return NETS[spec.kind](spec)


def solar_checkpoint_path(directory: Path, site_id: str, kind: str, with_clouds: bool) -> Path:
    lineage = "with_clouds" if with_clouds else "no_clouds"
    return Path(directory) / f"solar_{site_id}_{kind}_{lineage}.ckpt"


def load_solar_net(path: Path) -> SolarNet:
    arch = load_architecture(path)
    if arch.get("type") != "solar_net":
        raise ConfigurationError(f"{path} is not a solar net checkpoint")
    net = build_solar_net(SolarNetSpec(**arch["spec"]))
    params, _ = load_checkpoint(path)
    net.load_state_dict(params)
    return net


def cloud_feature(pixels: Sequence[float]) -> np.ndarray:
    """Raw 0-255 pixels to net inputs"""
    return np.asarray(pixels, dtype=np.float64) / 255.0

