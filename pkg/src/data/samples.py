"""
Forecast Samples and Chronological Splits

A sample anchored at frame t uses frames and power t-5..t as inputs and
power t+1..t+6 as targets, with the ground-truth pixels above the site at
t+1..t+6. Cloud-model training windows use the same anchors: frames
t-5..t in, frames t+1..t+6 out.
"""

import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from src.core.exceptions import ConfigurationError, TrainingError
from src.data.synth import Fleet, SiteSeries


logger = logging.getLogger(__name__)

HISTORY = 6
HORIZON = 6
WINDOW = HISTORY + HORIZON


@dataclass(frozen=True)
class ForecastSample:
    """One site's forecasting example; power in kW, pixels raw 0-255"""
    site_id: str
    anchor: int
    timestamp: datetime
    capacity_kw: float
    input_power: np.ndarray
    target_power: np.ndarray
    horizon_pixels: np.ndarray
    last_pixel: int

    @property
    def input_frame_indices(self) -> range:
        return range(self.anchor - HISTORY + 1, self.anchor + 1)

    def input_frames(self, fleet: Fleet) -> np.ndarray:
        """Normalised input frames [6, H, W]"""
        return fleet.frames.normalized(list(self.input_frame_indices))


class Split(NamedTuple):
    train: List[int]
    val: List[int]
    test: List[int]


def window_anchors(n_frames: int) -> range:
    """Anchors whose full input and target window fits in the series"""
    if n_frames < WINDOW:
        raise ConfigurationError(f"{n_frames} frames cannot hold a {WINDOW}-frame sample window")
    return range(HISTORY - 1, n_frames - HORIZON)


def daylight_anchors(fleet: Fleet) -> List[int]:
    """Anchors whose target window has non-zero clear-sky potential"""
    sun = fleet.clearsky()
    return [t for t in window_anchors(len(fleet.frames)) if sun[t + 1:t + 1 + HORIZON].sum() > 0.0]


def build_sample(fleet: Fleet, site: SiteSeries, anchor: int) -> ForecastSample:
    pixels = fleet.frames.frames[:, site.row, site.col]
    return ForecastSample(
        site_id=site.site_id,
        anchor=anchor,
        timestamp=fleet.frames.timestamp(anchor),
        capacity_kw=site.capacity_kw,
        input_power=site.power_kw[anchor - HISTORY + 1:anchor + 1].copy(),
        target_power=site.power_kw[anchor + 1:anchor + 1 + HORIZON].copy(),
        horizon_pixels=pixels[anchor + 1:anchor + 1 + HORIZON].astype(np.int64),
        last_pixel=int(pixels[anchor]),
    )


def build_samples(fleet: Fleet, anchors: Sequence[int]) -> Dict[str, List[ForecastSample]]:
    """Samples per site id for the given anchors"""
    return {site.site_id: [build_sample(fleet, site, a) for a in anchors] for site in fleet.sites}


def split_chronological(
    anchors: Sequence[int],
    ratios: Tuple[float, float, float] = (0.72, 0.18, 0.10),
) -> Split:
    """
    Contiguous train -> val -> test blocks of sorted anchors

    Block sizes are round(n * ratio) for train and val, the rest for test.
    Anchors at the start of val/test whose input window reaches back into
    the previous block's target window are dropped, so no frame is shared
    across splits.

    Example:
        ratios (0.72, 0.18, 0.10) on 1000 anchors spaced 12 frames apart
        gives 720 / 180 / 100.

    Raises:
        ConfigurationError: If ratios do not sum to 1
        TrainingError: If any split ends up empty
    """
    if abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ConfigurationError(f"Split ratios must be non-negative and sum to 1, got {ratios}")
    ordered = sorted(anchors)
    n = len(ordered)
    n_train = int(round(n * ratios[0]))
    n_val = int(round(n * ratios[1]))
    blocks = [ordered[:n_train], ordered[n_train:n_train + n_val], ordered[n_train + n_val:]]

    purged = [blocks[0]]
    for block in blocks[1:]:
        previous = next((b for b in reversed(purged) if b), [])
        last_target = previous[-1] + HORIZON if previous else -1
        purged.append([a for a in block if a - HISTORY + 1 > last_target])

    split = Split(*purged)
    for name, block in zip(Split._fields, split):
        if not block:
            raise TrainingError(f"{name} split is empty ({n} anchors, ratios {ratios})")
    dropped = n - sum(len(b) for b in split)
    logger.info(f"Split {n} anchors into {len(split.train)}/{len(split.val)}/{len(split.test)} (purged {dropped})")
    return split


def cloud_windows(fleet: Fleet, anchors: Sequence[int]) -> np.ndarray:
    """Normalised 12-frame windows [N, 12, H, W] for cloud-model training"""
    index = np.asarray(anchors)[:, None] + np.arange(-HISTORY + 1, HORIZON + 1)[None, :]
    return fleet.frames.frames[index].astype(np.float64) / 255.0


def strided(anchors: Sequence[int], stride: int) -> List[int]:
    return list(anchors)[::max(1, stride)]
