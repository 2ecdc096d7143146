"""
Convolutional Recurrent Cells

ConvLSTMCell implements, with * a same-padded convolution:

    i_t = sigmoid(W_ih * h + W_ix * x + b_i)
    f_t = sigmoid(W_fh * h + W_fx * x + b_f)
    o_t = sigmoid(W_oh * h + W_ox * x + b_o)
    C_t = i_t . tanh(W_ch * h + W_cx * x + b_c) + f_t . C_{t-1}
    h_t = o_t . tanh(C_t)

CBAMConvLSTMCell passes each of the eight convolution results through its
own CBAM before summation. SAConvLSTMCell follows the ConvLSTM update with
the self-attention memory module, whose output replaces h.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.cloud.attention import CBAM, SelfAttentionMemory, bias_map
from src.core.exceptions import ShapeError
from src.tensor.autodiff import Tensor, concat
from src.tensor.functional import conv2d
from src.tensor.module import Module, uniform_init


logger = logging.getLogger(__name__)

GATES = ("i", "f", "o", "c")


@dataclass(frozen=True)
class CellState:
    """
    Recurrent state of one layer

    h and C are [..., C_h, H, W]; M is present for self-attention cells only.
    """
    h: Tensor
    c: Tensor
    m: Optional[Tensor] = None

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], with_memory: bool = False) -> "CellState":
        return cls(
            h=Tensor(np.zeros(shape)),
            c=Tensor(np.zeros(shape)),
            m=Tensor(np.zeros(shape)) if with_memory else None,
        )


class ConvLSTMCell(Module):
    """
    ConvLSTM cell

    Example:
        >>> cell = ConvLSTMCell(1, 4, 3, np.random.default_rng(0))
        >>> state = cell.initial_state((5, 5))
        >>> cell(Tensor(np.zeros((1, 5, 5))), state).h.shape
        (4, 5, 5)
    """

    with_memory = False

    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        if kernel_size % 2 == 0:
            raise ShapeError(f"Cell kernel size must be odd, got {kernel_size}")
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.kernel_size = kernel_size

        k = kernel_size
        for gate in GATES:
            self.add_param(
                f"w_{gate}h", uniform_init(rng, (hidden_channels, hidden_channels, k, k), hidden_channels * k * k)
            )
            self.add_param(
                f"w_{gate}x", uniform_init(rng, (hidden_channels, in_channels, k, k), in_channels * k * k)
            )
            self.add_param(f"b_{gate}", uniform_init(rng, (hidden_channels,), (in_channels + hidden_channels) * k * k))

    def p(self, name: str) -> Tensor:
        return self._params[name]

    def initial_state(self, spatial: Tuple[int, int], batch: Optional[int] = None) -> CellState:
        lead = () if batch is None else (batch,)
        return CellState.zeros(lead + (self.hidden_channels,) + tuple(spatial), with_memory=self.with_memory)

    def _check(self, x: Tensor, state: CellState) -> None:
        if x.ndim not in (3, 4) or x.shape[-3] != self.in_channels:
            raise ShapeError(f"Cell expects {self.in_channels} input channels, got input {x.shape}")
        expected = x.shape[:-3] + (self.hidden_channels,) + x.shape[-2:]
        if state.h.shape != expected or state.c.shape != expected:
            raise ShapeError(f"State {state.h.shape}/{state.c.shape} incompatible with input {x.shape}")

    def conv_terms(self, x: Tensor, h: Tensor) -> Dict[str, Tensor]:
        """The eight convolution results keyed '<gate>h' / '<gate>x'"""
        n = self.hidden_channels
        w_h = concat([self.p(f"w_{g}h") for g in GATES], axis=0)
        w_x = concat([self.p(f"w_{g}x") for g in GATES], axis=0)
        conv_h = conv2d(h, w_h)
        conv_x = conv2d(x, w_x)
        terms = {}
        for idx, gate in enumerate(GATES):
            window = (Ellipsis, slice(idx * n, (idx + 1) * n), slice(None), slice(None))
            terms[f"{gate}h"] = conv_h[window]
            terms[f"{gate}x"] = conv_x[window]
        return terms

    def transform_term(self, key: str, term: Tensor) -> Tensor:
        return term

    def gates(self, x: Tensor, state: CellState) -> Dict[str, Tensor]:
        """Gate maps i, f, o and the candidate g = tanh(...)"""
        terms = self.conv_terms(x, state.h)
        out = {}
        for gate in GATES:
            pre = self.transform_term(f"{gate}h", terms[f"{gate}h"]) + self.transform_term(f"{gate}x", terms[f"{gate}x"])
            pre = pre + bias_map(self.p(f"b_{gate}"), pre)
            out[gate] = pre.tanh() if gate == "c" else pre.sigmoid()
        return out

    def lstm_update(self, x: Tensor, state: CellState) -> Tuple[Tensor, Tensor]:
        self._check(x, state)
        g = self.gates(x, state)
        c_next = g["i"] * g["c"] + g["f"] * state.c
        h_next = g["o"] * c_next.tanh()
        return h_next, c_next

    def __call__(self, x: Tensor, state: CellState) -> CellState:
        h_next, c_next = self.lstm_update(x, state)
        return CellState(h=h_next, c=c_next)


class CBAMConvLSTMCell(ConvLSTMCell):
    """ConvLSTM whose eight convolution results each pass through an unshared CBAM"""

    def __init__(
        self,
        in_channels: int,
        hidden_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        reduction: int = 4,
        spatial_kernel: int = 7,
        identity_attention: bool = False,
    ):
        super().__init__(in_channels, hidden_channels, kernel_size, rng)
        self.cbams: Dict[str, CBAM] = {}
        for gate in GATES:
            for source in ("h", "x"):
                key = f"{gate}{source}"
                self.cbams[key] = self.add_module(
                    f"cbam_{key}",
                    CBAM(hidden_channels, rng, reduction, spatial_kernel, identity_attention),
                )

    def set_identity_attention(self, enabled: bool) -> None:
        for cbam in self.cbams.values():
            cbam.identity_attention = enabled

    def transform_term(self, key: str, term: Tensor) -> Tensor:
        return self.cbams[key](term)


class SAConvLSTMCell(ConvLSTMCell):
    """ConvLSTM followed by the self-attention memory update"""

    with_memory = True

    def __init__(self, in_channels: int, hidden_channels: int, kernel_size: int, rng: np.random.Generator):
        super().__init__(in_channels, hidden_channels, kernel_size, rng)
        self.memory = self.add_module("sam", SelfAttentionMemory(hidden_channels, kernel_size, rng))

    def __call__(self, x: Tensor, state: CellState) -> CellState:
        if state.m is None:
            raise ShapeError("Self-attention cell needs a state carrying the memory M")
        h_next, c_next = self.lstm_update(x, state)
        h_hat, m_next = self.memory(h_next, state.m)
        return CellState(h=h_hat, c=c_next, m=m_next)


def build_cell(
    cell: str,
    in_channels: int,
    hidden_channels: int,
    kernel_size: int,
    rng: np.random.Generator,
    cbam_reduction: int = 4,
    cbam_kernel: int = 7,
) -> ConvLSTMCell:
    if cell == "convlstm":
        return ConvLSTMCell(in_channels, hidden_channels, kernel_size, rng)
    if cell == "cbam":
        return CBAMConvLSTMCell(in_channels, hidden_channels, kernel_size, rng, cbam_reduction, cbam_kernel)
    if cell == "sa":
        return SAConvLSTMCell(in_channels, hidden_channels, kernel_size, rng)
    raise ValueError(f"Unknown cell type: {cell}")
