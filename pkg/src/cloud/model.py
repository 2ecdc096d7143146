"""
Stacked Cloud Forecasting Networks

A CloudForecaster stacks recurrent cells (layer l feeds on the hidden map
of layer l-1) and maps the top hidden map to a single-channel frame with a
1x1 convolution head. `rollout` warms the state on the observed frames and
then feeds each predicted frame back in as the next input.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.cloud.cells import CBAMConvLSTMCell, CellState, ConvLSTMCell, build_cell
from src.core.exceptions import ConfigurationError, MissingArtifactError
from src.core.models import CloudNetSpec
from src.tensor.autodiff import Tensor, no_grad
from src.tensor.checkpoint import load_architecture, load_checkpoint, save_checkpoint
from src.tensor.functional import conv2d
from src.tensor.module import Module, uniform_init


logger = logging.getLogger(__name__)

States = List[CellState]


class CloudForecaster(Module):
    """
    Multi-layer ConvLSTM / CBAMConvLSTM / SAConvLSTM with a 1x1 output head

    Example:
        >>> model = CloudForecaster(CloudNetSpec(cell="sa", hidden_channels=4))
        >>> frames = np.zeros((6, 8, 8))
        >>> rollout(model, frames, horizon=6).shape
        (6, 8, 8)
    """

    def __init__(self, spec: CloudNetSpec, in_channels: int = 1):
        super().__init__()
        self.spec = spec
        self.in_channels = in_channels
        rng = np.random.default_rng(spec.seed)

        self.cells: List[ConvLSTMCell] = []
        for layer in range(spec.num_layers):
            cell = build_cell(
                spec.cell,
                in_channels if layer == 0 else spec.hidden_channels,
                spec.hidden_channels,
                spec.kernel_size,
                rng,
                spec.cbam_reduction,
                spec.cbam_kernel,
            )
            self.cells.append(self.add_module(f"layer{layer}", cell))

        n = spec.hidden_channels
        self.head_w = self.add_param("head_w", uniform_init(rng, (1, n, 1, 1), n))
        self.head_b = self.add_param("head_b", uniform_init(rng, (1,), n))

    def set_identity_attention(self, enabled: bool) -> None:
        for cell in self.cells:
            if isinstance(cell, CBAMConvLSTMCell):
                cell.set_identity_attention(enabled)

    def initial_states(self, frame_shape: Tuple[int, ...]) -> States:
        """Zero states for frames shaped [..., C, H, W]"""
        batch = frame_shape[0] if len(frame_shape) == 4 else None
        return [cell.initial_state(frame_shape[-2:], batch) for cell in self.cells]

    def forward_step(self, x: Tensor, states: States) -> Tuple[Tensor, States]:
        """Consume one frame; return the raw (unclamped) next-frame prediction"""
        new_states = []
        inp = x
        for cell, state in zip(self.cells, states):
            state = cell(inp, state)
            new_states.append(state)
            inp = state.h
        return conv2d(inp, self.head_w, self.head_b), new_states

    def architecture(self) -> dict:
        return {"type": "cloud_forecaster", "in_channels": self.in_channels, "spec": self.spec.model_dump()}

    def save(self, path: Path, meta: Optional[dict] = None) -> Path:
        return save_checkpoint(path, self.parameters(), self.architecture(), meta)

    @classmethod
    def load(cls, path: Path) -> "CloudForecaster":
        arch = load_architecture(path)
        if arch.get("type") != "cloud_forecaster":
            raise ConfigurationError(f"{path} is not a cloud forecaster checkpoint")
        model = cls(CloudNetSpec(**arch["spec"]), in_channels=arch.get("in_channels", 1))
        params, _ = load_checkpoint(path)
        model.load_state_dict(params)
        return model


class PersistenceCloudModel:
    """
    Frame persistence: every prediction repeats the frame just consumed

    Acts as the identity cloud model, so its rollout equals copies of the
    last observed frame.
    """

    spec = None

    def initial_states(self, frame_shape: Tuple[int, ...]) -> States:
        return []

    def forward_step(self, x: Tensor, states: States) -> Tuple[Tensor, States]:
        return x, states

    def parameters(self) -> dict:
        return {}


def _as_frames(frames: np.ndarray) -> np.ndarray:
    """Normalise [T, H, W] / [B, T, H, W] / [..., T, 1, H, W] to [..., T, 1, H, W]"""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim == 3:
        return frames[:, None]
    if frames.ndim == 4 and frames.shape[1] != 1:
        return frames[:, :, None]
    return frames


def warm_up(model, frames: np.ndarray) -> Tuple[Tensor, States]:
    """Feed observed frames; return the prediction after the last one and the state"""
    seq = _as_frames(frames)
    time_axis = 0 if seq.ndim == 4 else 1
    steps = seq.shape[time_axis]
    if steps < 1:
        raise ConfigurationError("Need at least one input frame")
    first = np.take(seq, 0, axis=time_axis)
    states = model.initial_states(first.shape)
    pred = None
    for t in range(steps):
        pred, states = model.forward_step(Tensor(np.take(seq, t, axis=time_axis)), states)
    return pred, states


def rollout(model, frames: np.ndarray, horizon: int = 6) -> np.ndarray:
    """
    Autoregressive forecast of the next `horizon` frames

    Args:
        model: CloudForecaster or PersistenceCloudModel
        frames: observed frames normalised to [0, 1], [T, H, W] or batched [B, T, H, W]
        horizon: number of frames to emit

    Returns:
        Array [horizon, H, W] (or [B, horizon, H, W]) with values in [0, 1]

    Raises:
        ConfigurationError: If horizon < 1
    """
    if horizon < 1:
        raise ConfigurationError(f"Rollout horizon must be >= 1, got {horizon}")
    with no_grad():
        pred, states = warm_up(model, frames)
        emitted = []
        for step in range(horizon):
            frame = pred.clamp(0.0, 1.0)
            emitted.append(frame.data)
            if step < horizon - 1:
                pred, states = model.forward_step(frame, states)
    out = np.stack(emitted, axis=-4)  # [..., horizon, 1, H, W]
    return out[..., 0, :, :]


def teacher_forced(model, frames: np.ndarray, n_inputs: int = 6) -> List[Tensor]:
    """
    One-step predictions with ground-truth inputs

    Feeds frames[0..T-2] and returns the raw predictions for frames
    n_inputs..T-1 (the forecast horizon), keeping the graph for training.
    """
    seq = _as_frames(frames)
    time_axis = 0 if seq.ndim == 4 else 1
    steps = seq.shape[time_axis]
    states = model.initial_states(np.take(seq, 0, axis=time_axis).shape)
    preds = []
    for t in range(steps - 1):
        pred, states = model.forward_step(Tensor(np.take(seq, t, axis=time_axis)), states)
        if t + 1 >= n_inputs:
            preds.append(pred)
    return preds


def load_cloud_model(model_id: str, checkpoint_dir: Optional[Path] = None):
    """Resolve a cloud model id; 'persistence' is built in"""
    if model_id == "persistence":
        return PersistenceCloudModel()
    if checkpoint_dir is None:
        raise MissingArtifactError(f"No checkpoint directory to resolve cloud model {model_id!r}")
    path = Path(checkpoint_dir) / f"cloud_{model_id}.ckpt"
    if not path.exists():
        raise MissingArtifactError(f"Cloud model checkpoint not found: {path}")
    return CloudForecaster.load(path)
