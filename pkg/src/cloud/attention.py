"""
Attention Submodules for Convolutional Recurrent Cells

- CBAM: channel attention (shared MLP over average- and max-pooled
  descriptors) followed by spatial attention (conv over channel-wise
  average and max maps). Each attention map rescales the feature map.
- SelfAttentionMemory: two-branch self-attention over flattened pixels
  (hidden state and attention memory) mixed by a 1x1 convolution, plus the
  gated memory update producing the new memory and output hidden map.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from src.tensor.autodiff import Tensor, concat
from src.tensor.functional import conv2d, dense, pool, softmax
from src.tensor.module import Module, uniform_init


logger = logging.getLogger(__name__)


def bias_map(bias: Tensor, like: Tensor) -> Tensor:
    """Broadcast a per-channel bias [C] over a [..., C, H, W] map"""
    return bias.reshape(bias.shape[0], 1, 1).expand(like.shape)


# ============================================================================
# CBAM
# ============================================================================

class CBAM(Module):
    """
    Convolutional block attention module

    F' = M_c(F) * F, then output = M_s(F') * F', where
    M_c = sigmoid(MLP(avgpool(F)) + MLP(maxpool(F))) and
    M_s = sigmoid(conv_ks([avg_c(F'); max_c(F')])).

    Setting `identity_attention` forces both attention maps to 1, so the
    module returns its input unchanged.

    Example:
        >>> cbam = CBAM(channels=4, rng=np.random.default_rng(0))
        >>> cbam(Tensor(np.ones((4, 5, 5)))).shape
        (4, 5, 5)
    """

    def __init__(
        self,
        channels: int,
        rng: np.random.Generator,
        reduction: int = 4,
        spatial_kernel: int = 7,
        identity_attention: bool = False,
    ):
        super().__init__()
        self.channels = channels
        self.hidden = max(1, channels // reduction)
        self.spatial_kernel = spatial_kernel
        self.identity_attention = identity_attention

        self.w1 = self.add_param("mlp_w1", uniform_init(rng, (self.hidden, channels), channels))
        self.b1 = self.add_param("mlp_b1", uniform_init(rng, (self.hidden,), channels))
        self.w2 = self.add_param("mlp_w2", uniform_init(rng, (channels, self.hidden), self.hidden))
        self.b2 = self.add_param("mlp_b2", uniform_init(rng, (channels,), self.hidden))
        fan_in = 2 * spatial_kernel * spatial_kernel
        self.w_spatial = self.add_param(
            "spatial_w", uniform_init(rng, (1, 2, spatial_kernel, spatial_kernel), fan_in)
        )

    def shared_mlp(self, descriptor: Tensor) -> Tensor:
        return dense(dense(descriptor, self.w1, self.b1).relu(), self.w2, self.b2)

    def channel_attention(self, feature: Tensor) -> Tensor:
        """Channel map M_c broadcast to the feature shape"""
        lead = feature.shape[:-3]
        c = feature.shape[-3]
        avg = pool(feature, "global_avg_spatial").reshape(lead + (c,))
        mx = pool(feature, "global_max_spatial").reshape(lead + (c,))
        weights = (self.shared_mlp(avg) + self.shared_mlp(mx)).sigmoid()
        return weights.reshape(lead + (c, 1, 1)).expand(feature.shape)

    def spatial_attention(self, feature: Tensor) -> Tensor:
        """Spatial map M_s broadcast to the feature shape"""
        descriptor = concat(
            [pool(feature, "avg_over_channels"), pool(feature, "max_over_channels")], axis=-3
        )
        weights = conv2d(descriptor, self.w_spatial).sigmoid()
        return weights.expand(feature.shape)

    def __call__(self, feature: Tensor) -> Tensor:
        if self.identity_attention:
            return feature
        refined = self.channel_attention(feature) * feature
        return self.spatial_attention(refined) * refined


# ============================================================================
# SELF-ATTENTION MEMORY
# ============================================================================

@dataclass
class AttentionWeights:
    """Softmax weights [..., N_keys, N_queries]; each column sums to 1"""
    hidden: np.ndarray
    memory: np.ndarray


def attend(query: Tensor, key: Tensor, value: Tensor) -> Tuple[Tensor, Tensor]:
    """
    Scaled dot-product attention over flattened pixels

    Args:
        query, key: [..., d, H, W]
        value: [..., C, H, W]

    Returns:
        (aggregate [..., C, H, W], weights [..., N, N]) where
        weights = softmax(K^T Q / sqrt(d)) normalised over keys
    """
    lead = query.shape[:-3]
    d, h, w = query.shape[-3:]
    n = h * w
    q = query.reshape(lead + (d, n))
    k = key.reshape(lead + (d, n))
    v = value.reshape(lead + (value.shape[-3], n))
    scores = (k.transpose() @ q) * (1.0 / np.sqrt(d))
    weights = softmax(scores, axis=-2)
    out = (v @ weights).reshape(lead + (value.shape[-3], h, w))
    return out, weights


class SelfAttentionMemory(Module):
    """
    Self-attention memory module

    Aggregates Z from h_t and M_{t-1}, then
        i' = sigmoid(W_i'h * h + W_i'z * Z + b_i')
        o' = sigmoid(W_o'h * h + W_o'z * Z + b_o')
        M_t = i' * tanh(W_mh * h + W_mz * Z + b_m) + (1 - i') * M_{t-1}
        h_hat = o' * tanh(M_t)
    """

    def __init__(self, channels: int, kernel_size: int, rng: np.random.Generator):
        super().__init__()
        self.channels = channels
        self.kernel_size = kernel_size
        self.key_dim = max(1, channels // 2)
        d, c, k = self.key_dim, channels, kernel_size

        def proj(name, out_ch, in_ch):
            self.add_param(f"{name}_w", uniform_init(rng, (out_ch, in_ch, 1, 1), in_ch))
            self.add_param(f"{name}_b", uniform_init(rng, (out_ch,), in_ch))

        proj("query_h", d, c)
        proj("key_h", d, c)
        proj("value_h", c, c)
        proj("key_m", d, c)
        proj("value_m", c, c)
        proj("mix", c, 2 * c)

        fan = c * k * k
        for gate in ("i", "o", "m"):
            self.add_param(f"w_{gate}h", uniform_init(rng, (c, c, k, k), fan))
            self.add_param(f"w_{gate}z", uniform_init(rng, (c, c, k, k), fan))
            self.add_param(f"b_{gate}", uniform_init(rng, (c,), fan))

    def p(self, name: str) -> Tensor:
        return self._params[name]

    def _proj(self, name: str, x: Tensor) -> Tensor:
        return conv2d(x, self.p(f"{name}_w"), self.p(f"{name}_b"))

    def aggregate(self, h: Tensor, memory: Tensor) -> Tuple[Tensor, AttentionWeights]:
        """Z = mix([Z_h; Z_m]) with queries from h, keys/values from h and M"""
        query = self._proj("query_h", h)
        z_h, a_h = attend(query, self._proj("key_h", h), self._proj("value_h", h))
        z_m, a_m = attend(query, self._proj("key_m", memory), self._proj("value_m", memory))
        z = self._proj("mix", concat([z_h, z_m], axis=-3))
        return z, AttentionWeights(hidden=a_h.data, memory=a_m.data)

    def _gate(self, gate: str, h: Tensor, z: Tensor) -> Tensor:
        pre = conv2d(h, self.p(f"w_{gate}h")) + conv2d(z, self.p(f"w_{gate}z"))
        return pre + bias_map(self.p(f"b_{gate}"), pre)

    def __call__(
        self, h: Tensor, memory: Tensor, z: Optional[Tensor] = None
    ) -> Tuple[Tensor, Tensor]:
        """Returns (h_hat, M_t)"""
        if z is None:
            z, _ = self.aggregate(h, memory)
        i_gate = self._gate("i", h, z).sigmoid()
        o_gate = self._gate("o", h, z).sigmoid()
        candidate = self._gate("m", h, z).tanh()
        new_memory = i_gate * candidate + (1.0 - i_gate) * memory
        return o_gate * new_memory.tanh(), new_memory
