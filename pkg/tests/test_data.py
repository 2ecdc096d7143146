"""Geography, synthetic fleets, samples, splits and dataset I/O"""

import numpy as np
import pytest

from src.core.exceptions import ConfigurationError, DataFormatError, ManifestError, MissingArtifactError, \
    OutOfFootprintError, TrainingError
from src.core.models import GridGeo
from src.data.fleet_io import load_fleet, load_frame, save_fleet
from src.data.geo import pixel_pitch, pixel_to_latlon, site_to_pixel
from src.data.samples import HISTORY, HORIZON, build_samples, cloud_windows, daylight_anchors, \
    split_chronological, window_anchors
from src.data.synth import clearsky_fraction, generate_fleet, pixel_shares, tau

from conftest import tiny_synth_config


# ============================================================================
# GEOGRAPHY
# ============================================================================

def test_grid_centre_maps_to_centre_pixel():
    geo = GridGeo()
    assert site_to_pixel(-31.95, 115.86, geo) == (30, 30)
    _, dlon = pixel_pitch(geo)
    assert site_to_pixel(-31.95, 115.86 + dlon, geo) == (30, 31)
    dlat, _ = pixel_pitch(geo)
    assert site_to_pixel(-31.95 + dlat, 115.86, geo) == (29, 30)


def test_pixel_centres_round_trip():
    geo = GridGeo(height=9, width=7)
    for row in range(9):
        for col in range(7):
            assert site_to_pixel(*pixel_to_latlon(row, col, geo), geo) == (row, col)


def test_out_of_footprint():
    geo = GridGeo()
    with pytest.raises(OutOfFootprintError):
        site_to_pixel(-20.0, 115.86, geo)
    with pytest.raises(OutOfFootprintError):
        pixel_to_latlon(60, 0, geo)


# ============================================================================
# SYNTHETIC FLEET
# ============================================================================

def test_generation_is_deterministic():
    a = generate_fleet(tiny_synth_config())
    b = generate_fleet(tiny_synth_config())
    assert a.frames.frames.tobytes() == b.frames.frames.tobytes()
    for sa, sb in zip(a.sites, b.sites):
        assert sa.power_kw.tobytes() == sb.power_kw.tobytes()
    c = generate_fleet(tiny_synth_config(seed=4))
    assert c.frames.frames.tobytes() != a.frames.frames.tobytes()


def test_cloud_free_fleet_produces_clear_sky_power():
    cfg = tiny_synth_config(clear_fraction=1.0)
    assert cfg.high_cloud_fraction == 0.0
    fleet = generate_fleet(cfg)
    assert not fleet.frames.frames.any()
    sun = fleet.clearsky()
    for site in fleet.sites:
        np.testing.assert_allclose(site.power_kw, site.capacity_kw * sun)


def test_impossible_cloud_budgets_are_configuration_errors():
    with pytest.raises(ConfigurationError, match="blob_count"):
        tiny_synth_config(blob_count=0)
    with pytest.raises(ConfigurationError, match="cloudy share"):
        tiny_synth_config(clear_fraction=0.9, high_cloud_fraction=0.2)
    with pytest.raises(ConfigurationError, match="altitude_blob_count"):
        tiny_synth_config(altitude_blob_count=0)
    assert tiny_synth_config(clear_fraction=1.0, blob_count=0).blob_count == 0


def test_attenuation_curve():
    assert tau(0) == 1.0
    assert tau(50) == pytest.approx(0.1)
    assert tau(51) == pytest.approx(0.55 - 0.35 / 205.0)
    assert tau(50) < tau(200)
    assert tau(255) == pytest.approx(0.2)


def test_clearsky_envelope():
    from datetime import datetime

    stamps = [datetime(2021, 1, 1, h) for h in (0, 6, 9, 12, 18, 23)]
    sun = clearsky_fraction(stamps, 6.0, 12.0)
    assert sun[0] == 0.0 and sun[1] == 0.0 and sun[4] == 0.0 and sun[5] == 0.0
    assert sun[3] == pytest.approx(1.0)
    assert sun[2] == pytest.approx(np.sin(np.pi / 4))


def test_pixel_shares_follow_config():
    cfg = tiny_synth_config(grid=GridGeo(height=16, width=16), n_days=3, blob_count=12)
    fleet = generate_fleet(cfg)
    shares = pixel_shares(fleet.frames.frames)
    assert abs(shares["clear"] - cfg.clear_fraction) < 0.10
    assert abs(shares["high_cloud"] - cfg.high_cloud_fraction) < 0.10
    assert fleet.frames.frames.max() <= 255


def test_power_tracks_transmission_of_pixel_above(tiny_fleet):
    sun = tiny_fleet.clearsky()
    day = sun > 0.05
    for site in tiny_fleet.sites:
        pixels = tiny_fleet.frames.frames[:, site.row, site.col]
        ratio = site.power_kw[day] / (site.capacity_kw * sun[day])
        np.testing.assert_allclose(ratio, tau(pixels[day]), atol=1e-9)
        assert np.all(site.power_kw >= 0.0)
        assert np.all(site.power_kw <= 1.05 * site.capacity_kw)


# ============================================================================
# SAMPLES AND SPLITS
# ============================================================================

def test_sample_windows_align(tiny_fleet):
    anchors = daylight_anchors(tiny_fleet)
    assert anchors and all(a >= HISTORY - 1 for a in anchors)
    samples = build_samples(tiny_fleet, anchors[:3])
    site = tiny_fleet.sites[0]
    sample = samples[site.site_id][0]
    a = sample.anchor
    np.testing.assert_array_equal(sample.input_power, site.power_kw[a - 5:a + 1])
    np.testing.assert_array_equal(sample.target_power, site.power_kw[a + 1:a + 7])
    np.testing.assert_array_equal(sample.horizon_pixels, tiny_fleet.frames.frames[a + 1:a + 7, site.row, site.col])
    assert sample.input_frames(tiny_fleet).shape == (HISTORY, 8, 8)

    windows = cloud_windows(tiny_fleet, anchors[:2])
    assert windows.shape == (2, HISTORY + HORIZON, 8, 8)
    np.testing.assert_array_equal(windows[0, HISTORY - 1], tiny_fleet.frames.frames[a] / 255.0)


def test_window_anchors_need_a_full_window():
    assert list(window_anchors(12)) == [5]
    with pytest.raises(ConfigurationError):
        window_anchors(11)


def test_split_sizes_on_spaced_anchors():
    anchors = [12 * i + 5 for i in range(1000)]
    split = split_chronological(anchors, (0.72, 0.18, 0.10))
    assert (len(split.train), len(split.val), len(split.test)) == (720, 180, 100)
    assert max(split.train) < min(split.val) and max(split.val) < min(split.test)


def test_split_purges_overlapping_windows():
    split = split_chronological(list(range(200)), (0.72, 0.18, 0.10))
    assert split.train == list(range(144))
    assert split.val == list(range(155, 180))
    assert split.test == list(range(191, 200))

    def frames(block):
        return {f for a in block for f in range(a - HISTORY + 1, a + HORIZON + 1)}

    assert not frames(split.train) & frames(split.val)
    assert not frames(split.val) & frames(split.test)


def test_split_errors():
    with pytest.raises(ConfigurationError):
        split_chronological(list(range(100)), (0.5, 0.5, 0.5))
    with pytest.raises(TrainingError):
        split_chronological(list(range(100)), (0.72, 0.18, 0.10))


# ============================================================================
# DATASET I/O
# ============================================================================

def test_save_load_save_is_byte_identical(tiny_fleet, tmp_path):
    save_fleet(tiny_fleet, tmp_path / "a")
    loaded = load_fleet(tmp_path / "a", jobs=2)
    save_fleet(loaded, tmp_path / "b")

    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    assert loaded.frames.frames.tobytes() == tiny_fleet.frames.frames.tobytes()
    assert loaded.meta == tiny_fleet.meta
    for original, restored in zip(tiny_fleet.sites, loaded.sites):
        assert restored.power_kw.tobytes() == original.power_kw.tobytes()


def test_truncated_frame_is_a_format_error(tiny_fleet, tmp_path):
    save_fleet(tiny_fleet, tmp_path)
    frame = sorted((tmp_path / "frames").glob("*.pgm"))[0]
    frame.write_bytes(frame.read_bytes()[:-10])
    with pytest.raises(DataFormatError, match="offset"):
        load_frame(frame, 8, 8)
    with pytest.raises(DataFormatError):
        load_fleet(tmp_path)


def test_frame_size_must_match_manifest(tiny_fleet, tmp_path):
    save_fleet(tiny_fleet, tmp_path)
    frame = sorted((tmp_path / "frames").glob("*.pgm"))[0]
    with pytest.raises(ManifestError):
        load_frame(frame, 9, 8)


def test_missing_frame_is_a_manifest_error(tiny_fleet, tmp_path):
    save_fleet(tiny_fleet, tmp_path)
    sorted((tmp_path / "frames").glob("*.pgm"))[3].unlink()
    with pytest.raises(ManifestError):
        load_fleet(tmp_path)


def test_missing_dataset(tmp_path):
    with pytest.raises(MissingArtifactError):
        load_fleet(tmp_path / "nowhere")
