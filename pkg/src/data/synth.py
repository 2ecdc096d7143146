"""
Synthetic Fleet Generation

Stands in for satellite crops and rooftop PV records:

- Cloud field: Gaussian blobs drifting with a shared prevailing wind on a
  wrap-around grid, radii pulsing over their lifecycle. A pixel is cloudy
  when the field exceeds its clear_fraction quantile over the whole volume.
- Altitude: a second blob field; among cloudy pixels the strongest share
  (high_cloud_fraction of all pixels) are high clouds drawn 51-255, the
  rest low clouds drawn 1-50. Brightness grows with field strength.
- Power: capacity * clearsky(t) * tau(pixel above the site), with small
  multiplicative noise, clipped to [0, 1.05 * capacity].
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Dict, List

import numpy as np

from src.core.exceptions import ConfigurationError
from src.core.models import GridGeo, SynthConfig
from src.core.runtime import timed_stage
from src.data.geo import pixel_to_latlon


logger = logging.getLogger(__name__)

CAPACITY_HEADROOM = 1.05
LOW_BAND = (1, 50)
HIGH_BAND = (51, 255)


# ============================================================================
# DATA TYPES
# ============================================================================

@dataclass(frozen=True)
class CloudFrame:
    """One infrared image in raw 0-255 scale"""
    grid: np.ndarray  # uint8 [H, W]
    timestamp: datetime

    def normalized(self) -> np.ndarray:
        return self.grid.astype(np.float64) / 255.0


@dataclass
class FrameSequence:
    """Frames at a fixed cadence, stored as one uint8 [T, H, W] array"""
    frames: np.ndarray
    start: datetime
    cadence_minutes: int = 10

    def __post_init__(self):
        if self.frames.dtype != np.uint8 or self.frames.ndim != 3:
            raise ConfigurationError(f"Frames must be uint8 [T, H, W], got {self.frames.dtype} {self.frames.shape}")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __getitem__(self, index: int) -> CloudFrame:
        return CloudFrame(self.frames[index], self.timestamp(index))

    def timestamp(self, index: int) -> datetime:
        return self.start + timedelta(minutes=self.cadence_minutes * int(index))

    @property
    def timestamps(self) -> List[datetime]:
        return [self.timestamp(i) for i in range(len(self))]

    def normalized(self, indices=None) -> np.ndarray:
        frames = self.frames if indices is None else self.frames[indices]
        return frames.astype(np.float64) / 255.0


@dataclass
class SiteSeries:
    """One PV site: location, pixel above it, capacity and power in kW per frame"""
    site_id: str
    lat: float
    lon: float
    row: int
    col: int
    capacity_kw: float
    power_kw: np.ndarray

    def __post_init__(self):
        self.power_kw = np.asarray(self.power_kw, dtype=np.float64)


@dataclass
class Fleet:
    """Frames plus every site's aligned power series"""
    frames: FrameSequence
    sites: List[SiteSeries]
    geo: GridGeo
    sunrise_hour: float = 6.0
    day_length_hours: float = 12.0
    meta: Dict[str, object] = field(default_factory=dict)

    def site(self, site_id: str) -> SiteSeries:
        for s in self.sites:
            if s.site_id == site_id:
                return s
        raise KeyError(site_id)

    def clearsky(self) -> np.ndarray:
        """Clear-sky fraction of capacity at every frame time"""
        return clearsky_fraction(self.frames.timestamps, self.sunrise_hour, self.day_length_hours)


# ============================================================================
# PHYSICS
# ============================================================================

def clearsky_fraction(timestamps: List[datetime], sunrise_hour: float, day_length_hours: float) -> np.ndarray:
    """
    Half-sine daylight envelope in [0, 1]

    Example:
        >>> float(clearsky_fraction([datetime(2021, 1, 1, 12)], 6.0, 12.0)[0])
        1.0
    """
    hours = np.array([t.hour + t.minute / 60.0 + t.second / 3600.0 for t in timestamps], dtype=np.float64)
    phase = (hours - sunrise_hour) / day_length_hours
    daylight = (phase > 0.0) & (phase < 1.0)
    return np.where(daylight, np.sin(np.pi * np.clip(phase, 0.0, 1.0)), 0.0)


def tau(pixel, low_slope: float = 0.9, high_intercept: float = 0.55, high_slope: float = 0.35):
    """
    Transmission factor of the cloud above a site

    tau = 1 - low_slope * p/50                      for p <= 50
    tau = high_intercept - high_slope * (p-50)/205  for p > 50

    Low clouds attenuate more than high clouds of equal brightness.
    """
    p = np.asarray(pixel, dtype=np.float64)
    low = 1.0 - low_slope * (p / 50.0)
    high = high_intercept - high_slope * ((p - 50.0) / 205.0)
    out = np.where(p <= 50.0, low, high)
    return float(out) if out.ndim == 0 else out


# ============================================================================
# CLOUD FIELD
# ============================================================================

def _blob_field(rng: np.random.Generator, count: int, cfg: SynthConfig, n_frames: int) -> np.ndarray:
    """Sum of drifting, pulsing Gaussian blobs on a torus, float [T, H, W]"""
    h, w = cfg.grid.height, cfg.grid.width
    field_ = np.zeros((n_frames, h, w))
    if count == 0:
        return field_

    wind = rng.uniform(0.0, 2.0 * np.pi)
    y0 = rng.uniform(0.0, h, size=count)
    x0 = rng.uniform(0.0, w, size=count)
    speed = rng.uniform(*cfg.blob_speed, size=count)
    heading = wind + rng.normal(0.0, 0.3, size=count)
    vy, vx = speed * np.sin(heading), speed * np.cos(heading)
    radius = rng.uniform(*cfg.blob_radius, size=count)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=count)
    amplitude = rng.uniform(0.5, 1.0, size=count)

    rows = np.arange(h, dtype=np.float64)[None, :, None]
    cols = np.arange(w, dtype=np.float64)[None, None, :]
    for t in range(n_frames):
        cy = ((y0 + vy * t) % h)[:, None, None]
        cx = ((x0 + vx * t) % w)[:, None, None]
        dy = np.abs(rows - cy)
        dx = np.abs(cols - cx)
        dy = np.minimum(dy, h - dy)
        dx = np.minimum(dx, w - dx)
        r = radius * (1.0 + 0.5 * np.sin(2.0 * np.pi * cfg.blob_growth * t + phase))
        r = np.maximum(r, 0.5)[:, None, None]
        field_[t] = (amplitude[:, None, None] * np.exp(-(dy * dy + dx * dx) / (2.0 * r * r))).sum(axis=0)
    return field_


def _strength(values: np.ndarray, threshold: float) -> np.ndarray:
    """Map field values above a threshold to [0, 1]"""
    if values.size == 0:
        return values
    top = np.quantile(values, 0.95)
    span = top - threshold
    if span <= 0:
        return np.ones_like(values)
    return np.clip((values - threshold) / span, 0.0, 1.0)


def generate_clouds(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """uint8 [T, H, W] cloud frames with the configured clear/high/low shares"""
    n_frames = cfg.n_frames
    cover = _blob_field(rng, cfg.blob_count, cfg, n_frames)
    altitude = _blob_field(rng, cfg.altitude_blob_count, cfg, n_frames)
    frames = np.zeros(cover.shape, dtype=np.uint8)

    if cfg.clear_fraction >= 1.0:
        return frames
    threshold = np.quantile(cover, cfg.clear_fraction) if cfg.clear_fraction > 0 else -np.inf
    cloudy = cover > threshold
    n_cloudy = int(cloudy.sum())
    if n_cloudy == 0:
        return frames

    high = np.zeros_like(cloudy)
    high_share = min(1.0, cfg.high_cloud_fraction * cover.size / n_cloudy)
    if high_share > 0:
        alt_cloudy = altitude[cloudy]
        alt_threshold = np.quantile(alt_cloudy, 1.0 - high_share) if high_share < 1.0 else -np.inf
        high[cloudy] = alt_cloudy > alt_threshold
    low = cloudy & ~high

    finite_threshold = threshold if np.isfinite(threshold) else float(cover.min())
    u_low = _strength(cover[low], finite_threshold)
    frames[low] = (LOW_BAND[0] + np.rint((LOW_BAND[1] - LOW_BAND[0]) * u_low)).astype(np.uint8)
    if high.any():
        alt_high = altitude[high]
        u_high = _strength(alt_high, float(alt_high.min()))
        frames[high] = (HIGH_BAND[0] + np.rint((HIGH_BAND[1] - HIGH_BAND[0]) * u_high)).astype(np.uint8)
    return frames


# ============================================================================
# FLEET
# ============================================================================

@timed_stage
def generate_fleet(cfg: SynthConfig) -> Fleet:
    """
    Deterministic synthetic fleet: identical configs give identical arrays

    Impossible cloud budgets are rejected by SynthConfig itself.
    """
    rng = np.random.default_rng(cfg.seed)
    frames = FrameSequence(generate_clouds(cfg, rng), cfg.start, cfg.cadence_minutes)
    sun = clearsky_fraction(frames.timestamps, cfg.sunrise_hour, cfg.day_length_hours)

    sites = []
    width = len(str(max(cfg.n_sites - 1, 1)))
    for index in range(cfg.n_sites):
        row = int(rng.integers(cfg.grid.height))
        col = int(rng.integers(cfg.grid.width))
        lat, lon = pixel_to_latlon(row, col, cfg.grid)
        capacity = round(float(rng.uniform(*cfg.capacity_kw)), 2)
        pixels = frames.frames[:, row, col]
        attenuation = tau(pixels, cfg.low_slope, cfg.high_intercept, cfg.high_slope)
        noise = 1.0 + rng.normal(0.0, cfg.noise_std, size=len(frames)) if cfg.noise_std > 0 else 1.0
        power = np.clip(capacity * sun * attenuation * noise, 0.0, CAPACITY_HEADROOM * capacity)
        sites.append(SiteSeries(f"site{index:0{width}d}", lat, lon, row, col, capacity, power))

    shares = pixel_shares(frames.frames)
    logger.info(
        f"Generated {len(frames)} frames and {len(sites)} sites "
        f"(clear {shares['clear']:.1%}, high {shares['high_cloud']:.1%}, low {shares['low_cloud']:.1%})"
    )
    return Fleet(frames, sites, cfg.grid, cfg.sunrise_hour, cfg.day_length_hours,
                 meta={"seed": cfg.seed, "split_ratios": list(cfg.split_ratios)})


def pixel_shares(frames: np.ndarray) -> Dict[str, float]:
    """Share of clear / low / high pixels in a frame volume"""
    total = frames.size
    clear = float((frames == 0).sum()) / total
    high = float((frames > 50).sum()) / total
    return {"clear": clear, "high_cloud": high, "low_cloud": 1.0 - clear - high}

