"""
Fleet Storage

On-disk layout of a dataset directory:

    manifest.json        format tag, grid geo-config, cadence, start time,
                         frame file names, sites (id, lat, lon, row, col,
                         capacity_kw), daylight parameters, seed
    frames/<stamp>.pgm   binary 8-bit grayscale PGM (P5), one per frame,
                         stamp = YYYYmmddTHHMM
    power.csv            timestamp,site,kw (ISO timestamps, one row per
                         frame and site, sorted by timestamp then site)

Saving a loaded fleet reproduces every file byte for byte.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from src.core.exceptions import DataFormatError, ManifestError, MissingArtifactError
from src.core.models import GridGeo
from src.core.runtime import run_jobs
from src.data.synth import Fleet, FrameSequence, SiteSeries


logger = logging.getLogger(__name__)

FORMAT = "solar-fleet/1"
STAMP = "%Y%m%dT%H%M"
MANIFEST = "manifest.json"
POWER = "power.csv"
FRAMES = "frames"


# ============================================================================
# SAVE
# ============================================================================

def frame_name(timestamp: datetime) -> str:
    return f"{timestamp.strftime(STAMP)}.pgm"


def save_frame(path: Path, grid: np.ndarray) -> None:
    Image.fromarray(np.ascontiguousarray(grid, dtype=np.uint8)).save(path, format="PPM")


def save_fleet(fleet: Fleet, root: Path) -> Path:
    """
    Write a fleet to a dataset directory

    Returns:
        Path of the manifest
    """
    root = Path(root)
    frame_dir = root / FRAMES
    frame_dir.mkdir(parents=True, exist_ok=True)

    names = [frame_name(ts) for ts in fleet.frames.timestamps]
    for name, grid in zip(names, fleet.frames.frames):
        save_frame(frame_dir / name, grid)

    timestamps = [ts.isoformat() for ts in fleet.frames.timestamps]
    power = pd.DataFrame({
        "timestamp": np.repeat(timestamps, len(fleet.sites)),
        "site": np.tile([s.site_id for s in fleet.sites], len(timestamps)),
        "kw": np.stack([s.power_kw for s in fleet.sites], axis=1).reshape(-1),
    })
    power.to_csv(root / POWER, index=False, lineterminator="\n")

    manifest = {
        "format": FORMAT,
        "grid": fleet.geo.model_dump(),
        "cadence_minutes": fleet.frames.cadence_minutes,
        "start": fleet.frames.start.isoformat(),
        "n_frames": len(fleet.frames),
        "frames": names,
        "sites": [
            {"site_id": s.site_id, "lat": s.lat, "lon": s.lon, "row": s.row, "col": s.col,
             "capacity_kw": s.capacity_kw}
            for s in fleet.sites
        ],
        "daylight": {"sunrise_hour": fleet.sunrise_hour, "day_length_hours": fleet.day_length_hours},
        "meta": fleet.meta,
    }
    path = root / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info(f"✅ Saved {len(names)} frames and {len(fleet.sites)} sites to {root}")
    return path


# ============================================================================
# LOAD
# ============================================================================

def load_frame(path: Path, height: int, width: int) -> np.ndarray:
    """
    Read one P5 frame

    Raises:
        DataFormatError: On a malformed header or truncated pixel data,
                         naming the file and byte offset
        ManifestError: If the frame size differs from the manifest grid
    """
    size = path.stat().st_size
    try:
        with Image.open(path) as image:
            if image.format != "PPM" or image.mode != "L":
                raise DataFormatError(f"{path}: not an 8-bit grayscale PGM (offset 0)")
            offset = image.tile[0][2] if image.tile else 0
            expected = offset + image.width * image.height
            if size < expected:
                raise DataFormatError(f"{path}: truncated pixel data at offset {size}, expected {expected} bytes")
            if image.size != (width, height):
                raise ManifestError(f"{path}: frame is {image.width}x{image.height}, manifest says {width}x{height}")
            return np.asarray(image, dtype=np.uint8).copy()
    except (UnidentifiedImageError, SyntaxError, OSError, ValueError) as e:
        raise DataFormatError(f"{path}: unreadable PGM at offset 0: {e}") from e


def _read_manifest(root: Path) -> dict:
    path = root / MANIFEST
    if not path.exists():
        raise MissingArtifactError(f"Dataset manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: malformed JSON at offset {e.pos}: {e.msg}") from e
    if manifest.get("format") != FORMAT:
        raise DataFormatError(f"{path}: unknown format {manifest.get('format')!r}")
    return manifest


def _read_power(root: Path, site_ids: List[str], n_frames: int, timestamps: List[str]) -> np.ndarray:
    path = root / POWER
    if not path.exists():
        raise MissingArtifactError(f"Power series not found: {path}")
    try:
        power = pd.read_csv(path, dtype={"timestamp": str, "site": str}, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise DataFormatError(f"{path}: {e}") from e
    if list(power.columns) != ["timestamp", "site", "kw"]:
        raise DataFormatError(f"{path}: expected columns timestamp,site,kw, got {list(power.columns)} (offset 0)")
    if len(power) != n_frames * len(site_ids):
        raise ManifestError(f"{path}: {len(power)} rows, manifest implies {n_frames} frames x {len(site_ids)} sites")
    expected_sites = np.tile(site_ids, n_frames)
    expected_stamps = np.repeat(timestamps, len(site_ids))
    if not (np.array_equal(power["site"].to_numpy(), expected_sites)
            and np.array_equal(power["timestamp"].to_numpy(), expected_stamps)):
        raise ManifestError(f"{path}: rows are not ordered by manifest timestamps and sites")
    kw = power["kw"].to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(kw)):
        raise DataFormatError(f"{path}: non-finite power values")
    return kw.reshape(n_frames, len(site_ids))


def load_fleet(root: Path, jobs: int = 1) -> Fleet:
    """
    Read a dataset directory written by save_fleet

    Raises:
        MissingArtifactError: If the directory or a required file is absent
        DataFormatError: On unparsable files
        ManifestError: If contents disagree with the manifest
    """
    root = Path(root)
    manifest = _read_manifest(root)
    geo = GridGeo(**manifest["grid"])
    names = manifest["frames"]
    n_frames = manifest["n_frames"]

    frame_dir = root / FRAMES
    on_disk = sorted(p.name for p in frame_dir.glob("*.pgm")) if frame_dir.exists() else []
    if len(names) != n_frames or len(on_disk) != n_frames:
        raise ManifestError(
            f"{root}: manifest lists {n_frames} frames ({len(names)} names), found {len(on_disk)} PGM files"
        )
    missing = sorted(set(names) - set(on_disk))
    if missing:
        raise ManifestError(f"{frame_dir}: missing frame files {missing[:3]}")

    grids = run_jobs(lambda name: load_frame(frame_dir / name, geo.height, geo.width), names, jobs)
    start = datetime.fromisoformat(manifest["start"])
    frames = FrameSequence(np.stack(grids).astype(np.uint8), start, manifest["cadence_minutes"])
    if [frame_name(ts) for ts in frames.timestamps] != names:
        raise ManifestError(f"{root}: frame names do not follow the manifest cadence")

    site_ids = [s["site_id"] for s in manifest["sites"]]
    power = _read_power(root, site_ids, n_frames, [ts.isoformat() for ts in frames.timestamps])
    sites = [
        SiteSeries(s["site_id"], s["lat"], s["lon"], s["row"], s["col"], s["capacity_kw"], power[:, i])
        for i, s in enumerate(manifest["sites"])
    ]
    daylight = manifest["daylight"]
    logger.info(f"Loaded {n_frames} frames and {len(sites)} sites from {root}")
    return Fleet(frames, sites, geo, daylight["sunrise_hour"], daylight["day_length_hours"],
                 meta=manifest.get("meta", {}))
