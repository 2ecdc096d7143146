"""
Structural Similarity

SSIM with an 11x11 Gaussian window (sigma 1.5), valid filtering and
stabilisers C1 = (0.01 L)^2, C2 = (0.03 L)^2, averaged over all window
positions. Images smaller than the window get the largest odd window that
fits. Works on autodiff tensors so 1 - SSIM can be trained on.
"""

from typing import Union

import numpy as np

from src.core.exceptions import ShapeError
from src.tensor.autodiff import Tensor
from src.tensor.functional import conv2d


WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5


def window_size_for(height: int, width: int, size: int = WINDOW_SIZE) -> int:
    size = min(size, height, width)
    return size if size % 2 == 1 else size - 1


def gaussian_window(size: int, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    """Normalised 2-D Gaussian, shape [size, size]"""
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _as_image(x: Union[Tensor, np.ndarray]) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim == 2:
        return t.reshape((1,) + t.shape)
    if t.ndim in (3, 4) and t.shape[-3] == 1:
        return t
    raise ShapeError(f"ssim expects [H, W] or single-channel images, got {t.shape}")


def ssim(a: Union[Tensor, np.ndarray], b: Union[Tensor, np.ndarray], data_range: float = 1.0) -> Tensor:
    """
    Mean SSIM index between two images (batched inputs average over the batch too)

    Example:
        >>> x = np.random.default_rng(0).random((16, 16))
        >>> round(ssim(x, x).item(), 12)
        1.0
    """
    if data_range <= 0:
        raise ShapeError(f"ssim data_range must be positive, got {data_range}")
    a, b = _as_image(a), _as_image(b)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shape mismatch {a.shape} vs {b.shape}")

    size = window_size_for(a.shape[-2], a.shape[-1])
    window = Tensor(gaussian_window(size)[None, None])

    def filt(x: Tensor) -> Tensor:
        return conv2d(x, window, padding="valid")

    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    mu_a, mu_b = filt(a), filt(b)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    var_a = filt(a * a) - mu_aa
    var_b = filt(b * b) - mu_bb
    cov = filt(a * b) - mu_ab

    numerator = (mu_ab * 2.0 + c1) * (cov * 2.0 + c2)
    denominator = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return (numerator / denominator).mean()


def ssim_loss(pred: Union[Tensor, np.ndarray], target: Union[Tensor, np.ndarray], data_range: float = 1.0) -> Tensor:
    """Training loss 1 - SSIM"""
    return 1.0 - ssim(pred, target, data_range)
