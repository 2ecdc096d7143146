"""
Network Operations

Affine maps, 1-D/2-D convolutions, pooling and softmax built on the
autodiff `Function` base. Every op accepts an optional leading batch axis.
"""

from typing import Literal, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.exceptions import ShapeError
from src.tensor.autodiff import Function, Tensor


Padding = Literal["same", "valid"]
PadMode = Literal["zeros", "edge"]
PoolMode = Literal["global_avg_spatial", "global_max_spatial", "avg_over_channels", "max_over_channels"]


def _same_pads(k: int) -> Tuple[int, int]:
    """Left/right zero counts keeping the length; even kernels put the extra one on the right"""
    left = (k - 1) // 2
    return left, k - 1 - left


# ============================================================================
# DENSE
# ============================================================================

class Dense(Function):
    """y = x W^T + b for x of shape [n] or [B, n], W [m, n], b [m]"""

    def forward(self, x, weights, bias=None):
        if weights.ndim != 2 or x.shape[-1] != weights.shape[1] or x.ndim not in (1, 2):
            raise ShapeError(f"dense: input {x.shape} incompatible with weights {weights.shape}")
        if bias is not None and bias.shape != (weights.shape[0],):
            raise ShapeError(f"dense: bias {bias.shape} does not match weights {weights.shape}")
        self.x, self.w = x, weights
        out = x @ weights.T
        return out + bias if bias is not None else out

    def backward(self, grad):
        gx = grad @ self.w
        if self.x.ndim == 1:
            gw = np.outer(grad, self.x)
            gb = grad
        else:
            gw = grad.T @ self.x
            gb = grad.sum(axis=0)
        return (gx, gw, gb) if len(self.parents) == 3 else (gx, gw)


def dense(x: Tensor, weights: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Affine map

    Example:
        >>> dense(Tensor([1.0, 2.0]), Tensor(np.eye(2)), Tensor([0.0, 0.0])).data
        array([1., 2.])
    """
    if bias is None:
        return Dense.apply(x, weights)
    return Dense.apply(x, weights, bias)


matmul = Tensor.__matmul__


# ============================================================================
# CONVOLUTION
# ============================================================================

class Conv2d(Function):
    """
    2-D cross-correlation over [C, H, W] or [B, C, H, W]

    output[o, y, x] = bias[o] + sum_{c,dy,dx} input[c, y+dy-p, x+dx-p] * kernel[o, c, dy, dx]
    with p = (k-1)/2 for same padding and 0 for valid padding.
    """

    def forward(self, x, kernel, bias=None, padding: Padding = "same"):
        if x.ndim not in (3, 4) or kernel.ndim != 4:
            raise ShapeError(f"conv2d: expected [C,H,W] input and [O,C,k,k] kernel, got {x.shape}, {kernel.shape}")
        if x.shape[-3] != kernel.shape[1]:
            raise ShapeError(f"conv2d: input has {x.shape[-3]} channels, kernel expects {kernel.shape[1]}")
        if bias is not None and bias.shape != (kernel.shape[0],):
            raise ShapeError(f"conv2d: bias {bias.shape} does not match {kernel.shape[0]} output channels")
        kh, kw = kernel.shape[2:]
        if padding == "same":
            if kh % 2 == 0 or kw % 2 == 0:
                raise ShapeError(f"conv2d: same padding needs odd kernels, got {kh}x{kw}")
            ph, pw = (kh - 1) // 2, (kw - 1) // 2
        elif padding == "valid":
            ph = pw = 0
            if x.shape[-2] < kh or x.shape[-1] < kw:
                raise ShapeError(f"conv2d: valid padding with kernel {kh}x{kw} larger than input {x.shape}")
        else:
            raise ShapeError(f"conv2d: unknown padding {padding!r}")

        self.batched = x.ndim == 4
        xb = x if self.batched else x[None]
        self.in_hw = xb.shape[2:]
        self.pads = (ph, pw)
        xp = np.pad(xb, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        self.windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))
        self.kernel = kernel
        self.padded_shape = xp.shape

        out = np.einsum("bchwij,ocij->bohw", self.windows, kernel, optimize=True)
        if bias is not None:
            out = out + bias[None, :, None, None]
        return out if self.batched else out[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        kh, kw = self.kernel.shape[2:]
        ho, wo = g.shape[2:]

        g_kernel = np.einsum("bohw,bchwij->ocij", g, self.windows, optimize=True)
        g_padded = np.zeros(self.padded_shape)
        for i in range(kh):
            for j in range(kw):
                g_padded[:, :, i:i + ho, j:j + wo] += np.einsum("bohw,oc->bchw", g, self.kernel[:, :, i, j])
        ph, pw = self.pads
        h, w = self.in_hw
        g_x = g_padded[:, :, ph:ph + h, pw:pw + w]
        if not self.batched:
            g_x = g_x[0]

        if len(self.parents) == 3:
            return g_x, g_kernel, g.sum(axis=(0, 2, 3))
        return g_x, g_kernel


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, padding: Padding = "same") -> Tensor:
    if bias is None:
        return Conv2d.apply(x, kernel, padding=padding)
    return Conv2d.apply(x, kernel, bias, padding=padding)


class Conv1d(Function):
    """
    1-D cross-correlation over [C, L] or [B, C, L]

    pad_mode "zeros" treats out-of-range samples as 0; "edge" repeats the
    first/last sample.
    """

    def forward(self, x, kernel, bias=None, padding: Padding = "same", pad_mode: PadMode = "zeros"):
        if x.ndim not in (2, 3) or kernel.ndim != 3:
            raise ShapeError(f"conv1d: expected [C,L] input and [O,C,k] kernel, got {x.shape}, {kernel.shape}")
        if x.shape[-2] != kernel.shape[1]:
            raise ShapeError(f"conv1d: input has {x.shape[-2]} channels, kernel expects {kernel.shape[1]}")
        if bias is not None and bias.shape != (kernel.shape[0],):
            raise ShapeError(f"conv1d: bias {bias.shape} does not match {kernel.shape[0]} output channels")
        k = kernel.shape[2]
        if padding == "same":
            left, right = _same_pads(k)
        elif padding == "valid":
            left = right = 0
            if x.shape[-1] < k:
                raise ShapeError(f"conv1d: valid padding with kernel {k} longer than input {x.shape[-1]}")
        else:
            raise ShapeError(f"conv1d: unknown padding {padding!r}")

        self.batched = x.ndim == 3
        xb = x if self.batched else x[None]
        self.length = xb.shape[2]
        self.pads = (left, right)
        self.pad_mode = pad_mode
        np_mode = "constant" if pad_mode == "zeros" else "edge"
        xp = np.pad(xb, ((0, 0), (0, 0), (left, right)), mode=np_mode)
        self.windows = sliding_window_view(xp, k, axis=2)
        self.kernel = kernel
        self.padded_shape = xp.shape

        out = np.einsum("bcli,oci->bol", self.windows, kernel, optimize=True)
        if bias is not None:
            out = out + bias[None, :, None]
        return out if self.batched else out[0]

    def backward(self, grad):
        g = grad if self.batched else grad[None]
        k = self.kernel.shape[2]
        lo = g.shape[2]

        g_kernel = np.einsum("bol,bcli->oci", g, self.windows, optimize=True)
        g_padded = np.zeros(self.padded_shape)
        for i in range(k):
            g_padded[:, :, i:i + lo] += np.einsum("bol,oc->bcl", g, self.kernel[:, :, i])
        left, right = self.pads
        g_x = g_padded[:, :, left:left + self.length].copy()
        if self.pad_mode == "edge":
            g_x[:, :, 0] += g_padded[:, :, :left].sum(axis=2)
            g_x[:, :, -1] += g_padded[:, :, left + self.length:].sum(axis=2)
        if not self.batched:
            g_x = g_x[0]

        if len(self.parents) == 3:
            return g_x, g_kernel, g.sum(axis=(0, 2))
        return g_x, g_kernel


def conv1d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    padding: Padding = "same",
    pad_mode: PadMode = "zeros",
) -> Tensor:
    if bias is None:
        return Conv1d.apply(x, kernel, padding=padding, pad_mode=pad_mode)
    return Conv1d.apply(x, kernel, bias, padding=padding, pad_mode=pad_mode)


# ============================================================================
# POOLING
# ============================================================================

class Pool(Function):
    """
    Global pooling over [..., C, H, W]

    Spatial modes return [..., C, 1, 1]; channel modes return [..., 1, H, W].
    Max ties share the gradient equally.
    """

    def forward(self, x, mode: PoolMode):
        if mode not in ("global_avg_spatial", "global_max_spatial", "avg_over_channels", "max_over_channels"):
            raise ShapeError(f"pool: unknown mode {mode!r}")
        if x.ndim < 3:
            raise ShapeError(f"pool: expected [..., C, H, W], got {x.shape}")
        self.axis = (-2, -1) if mode.startswith("global") else (-3,)
        self.mode = mode
        self.x = x
        if "avg" in mode:
            self.count = int(np.prod([x.shape[a] for a in self.axis]))
            return x.mean(axis=self.axis, keepdims=True)
        self.out = x.max(axis=self.axis, keepdims=True)
        return self.out

    def backward(self, grad):
        if "avg" in self.mode:
            return (np.broadcast_to(grad / self.count, self.x.shape).copy(),)
        mask = (self.x == self.out).astype(np.float64)
        mask /= mask.sum(axis=self.axis, keepdims=True)
        return (mask * grad,)


def pool(x: Tensor, mode: PoolMode) -> Tensor:
    """
    Example:
        >>> pool(Tensor([[[1.0, 3.0], [5.0, 7.0]]]), "global_avg_spatial").item()
        4.0
    """
    return Pool.apply(x, mode=mode)


# ============================================================================
# SOFTMAX AND DROPOUT
# ============================================================================

class Softmax(Function):
    def forward(self, x, axis: int = -1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    """
    Inverted dropout: zero a share `rate` of units and rescale the rest

    A no-op in eval mode and at rate 0, so both modes agree bit-for-bit then.
    """
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout at train time needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * Tensor(keep)
