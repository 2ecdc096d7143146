"""
Site <-> Pixel Mapping

Nearest-pixel equirectangular mapping. The grid centre (center_lat,
center_lon) is the centre of pixel (H/2, W/2) using integer division;
rows grow southwards and columns eastwards, one pixel per pixel_km.
"""

import math
from typing import Tuple

from src.core.exceptions import OutOfFootprintError
from src.core.models import GridGeo


KM_PER_DEGREE_LAT = 111.32


def pixel_pitch(geo: GridGeo) -> Tuple[float, float]:
    """Degrees of latitude and longitude covered by one pixel"""
    dlat = geo.pixel_km / KM_PER_DEGREE_LAT
    dlon = geo.pixel_km / (KM_PER_DEGREE_LAT * math.cos(math.radians(geo.center_lat)))
    return dlat, dlon


def site_to_pixel(lat: float, lon: float, geo: GridGeo) -> Tuple[int, int]:
    """
    Grid indices of the pixel containing a location

    Raises:
        OutOfFootprintError: If the location falls outside the grid

    Example:
        >>> site_to_pixel(-31.95, 115.86, GridGeo())
        (30, 30)
    """
    dlat, dlon = pixel_pitch(geo)
    row = math.floor(geo.height // 2 - (lat - geo.center_lat) / dlat + 0.5)
    col = math.floor(geo.width // 2 + (lon - geo.center_lon) / dlon + 0.5)
    if not (0 <= row < geo.height and 0 <= col < geo.width):
        raise OutOfFootprintError(f"({lat}, {lon}) maps to pixel ({row}, {col}) outside the {geo.height}x{geo.width} grid")
    return row, col


def pixel_to_latlon(row: int, col: int, geo: GridGeo) -> Tuple[float, float]:
    """Centre of a pixel"""
    if not (0 <= row < geo.height and 0 <= col < geo.width):
        raise OutOfFootprintError(f"Pixel ({row}, {col}) outside the {geo.height}x{geo.width} grid")
    dlat, dlon = pixel_pitch(geo)
    lat = geo.center_lat - (row - geo.height // 2) * dlat
    lon = geo.center_lon + (col - geo.width // 2) * dlon
    return lat, lon
