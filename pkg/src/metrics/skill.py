"""
Forecast Verification Metrics

RMSE / MAE over a forecast horizon, skill scores against the persistence
reference, and sky-condition classification of infrared pixel values.
"""

from typing import Literal, Optional, Sequence

import numpy as np

from src.core.exceptions import ShapeError


SkyClass = Literal["clear", "low_cloud", "high_cloud"]
Condition = Literal["clear", "high_cloud", "low_cloud", "cloudy_all", "all"]

CLOUD_ALTITUDE_THRESHOLD = 50
CONDITIONS = ("clear", "high_cloud", "low_cloud", "cloudy_all", "all")


def _pair(pred: Sequence[float], actual: Sequence[float]):
    p = np.asarray(pred, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ShapeError(f"Forecast and actual lengths differ: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ShapeError("Cannot score an empty series")
    return p, a


def rmse(pred: Sequence[float], actual: Sequence[float]) -> float:
    """
    Root mean squared error over the horizon

    Example:
        >>> rmse([3.0, 4.0], [0.0, 0.0]) == np.sqrt(12.5)
        True
    """
    p, a = _pair(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def mae(pred: Sequence[float], actual: Sequence[float]) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean(np.abs(p - a)))


def skill_score(err_method: float, err_persistence: float) -> Optional[float]:
    """
    Percentage improvement over persistence: (1 - err_method / err_persistence) * 100

    A zero persistence error scores 0% when the method is also perfect; a
    non-zero method error against a perfect persistence is undefined and
    returns None so the caller can exclude and count the sample.

    Example:
        >>> skill_score(0.75, 1.0)
        25.0
    """
    if err_persistence == 0.0:
        return 0.0 if err_method == 0.0 else None
    return (1.0 - err_method / err_persistence) * 100.0


def classify_sky(pixel: int) -> SkyClass:
    """
    Sky class of a raw 0-255 infrared pixel

    0 is clear sky, (0, 50] a low altitude cloud, above 50 a high altitude
    cloud (brighter means a colder, higher cloud top).
    """
    if not 0 <= pixel <= 255:
        raise ValueError(f"Pixel value {pixel} outside [0, 255]")
    if pixel == 0:
        return "clear"
    return "low_cloud" if pixel <= CLOUD_ALTITUDE_THRESHOLD else "high_cloud"


def classify_sample(horizon_pixels: Sequence[int]) -> SkyClass:
    """
    Sky condition of a forecast sample from its ground-truth horizon pixels

    clear when every pixel is 0, high_cloud when any pixel exceeds 50,
    low_cloud otherwise.
    """
    classes = {classify_sky(int(p)) for p in horizon_pixels}
    if classes == {"clear"}:
        return "clear"
    return "high_cloud" if "high_cloud" in classes else "low_cloud"


def conditions_of(sky: SkyClass) -> tuple:
    """Report cells a sample of this class contributes to"""
    if sky == "clear":
        return ("clear", "all")
    return (sky, "cloudy_all", "all")
