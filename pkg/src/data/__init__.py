"""Package initialization for src.data"""

from src.data.fleet_io import load_fleet, save_fleet
from src.data.geo import pixel_to_latlon, site_to_pixel
from src.data.samples import (
    ForecastSample,
    Split,
    build_samples,
    cloud_windows,
    daylight_anchors,
    split_chronological,
)
from src.data.synth import CloudFrame, Fleet, FrameSequence, SiteSeries, clearsky_fraction, generate_fleet, tau

__all__ = [
    'load_fleet',
    'save_fleet',
    'pixel_to_latlon',
    'site_to_pixel',
    'ForecastSample',
    'Split',
    'build_samples',
    'cloud_windows',
    'daylight_anchors',
    'split_chronological',
    'CloudFrame',
    'Fleet',
    'FrameSequence',
    'SiteSeries',
    'clearsky_fraction',
    'generate_fleet',
    'tau',
]
