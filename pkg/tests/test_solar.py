"""Solar forecasting nets and the persistence baseline"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from src.core.exceptions import ConfigurationError, ScenarioMismatchError, ShapeError
from src.core.models import SolarNetSpec, SolarSearchSpace
from src.solar.nets import (
    CNN1dNet,
    build_solar_net,
    cloud_feature,
    load_solar_net,
    persistence_power,
    solar_checkpoint_path,
)
from src.training.search import sample_solar_spec


def small_spec(kind: str, with_clouds: bool = True, **overrides) -> SolarNetSpec:
    base = {
        "mlp": dict(num_layers=2, units=8, epochs=100),
        "cnn1d": dict(num_layers=2, units=32, kernel_size=2, epochs=500),
        "lstm": dict(num_layers=1, units=32, epochs=500),
    }[kind]
    return SolarNetSpec(kind=kind, with_clouds=with_clouds, **{**base, **overrides})


def test_persistence_power_repeats_last_value():
    assert persistence_power([0, 0, 0, 0, 0, 3.2]).tolist() == [3.2] * 6
    assert persistence_power([1.0, 2.0], horizon=3).tolist() == [2.0] * 3
    with pytest.raises(ShapeError):
        persistence_power([])


@pytest.mark.parametrize("kind", ["mlp", "cnn1d", "lstm"])
@pytest.mark.parametrize("with_clouds", [True, False])
def test_output_shapes(kind, with_clouds, rng):
    net = build_solar_net(small_spec(kind, with_clouds))
    clouds_one = rng.random(6) if with_clouds else None
    clouds_batch = rng.random((5, 6)) if with_clouds else None
    assert net(rng.random(6), clouds_one).shape == (6,)
    assert net(rng.random((5, 6)), clouds_batch).shape == (5, 6)


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(["mlp", "cnn1d", "lstm"]), seed=st.integers(0, 2**16))
def test_every_sampled_spec_builds_a_working_net(kind, seed):
    space = SolarSearchSpace(kind=kind, epochs=(100, 100) if kind == "mlp" else (500, 500),
                             units=[8] if kind == "mlp" else [32])
    spec = sample_solar_spec(space, np.random.default_rng(seed), with_clouds=bool(seed % 2))
    net = build_solar_net(spec)
    power = np.random.default_rng(seed).random((2, 6))
    clouds = np.zeros((2, 6)) if spec.with_clouds else None
    out = net(power, clouds, train=True, rng=np.random.default_rng(seed))
    assert out.shape == (2, 6) and np.all(np.isfinite(out.data))


@pytest.mark.parametrize("kind", ["mlp", "cnn1d", "lstm"])
def test_lineage_mismatch_raises(kind, rng):
    with_clouds = build_solar_net(small_spec(kind, True))
    without = build_solar_net(small_spec(kind, False))
    with pytest.raises(ScenarioMismatchError):
        with_clouds(rng.random(6), None)
    with pytest.raises(ScenarioMismatchError):
        without(rng.random(6), rng.random(6))


def test_input_length_is_checked(rng):
    net = build_solar_net(small_spec("mlp", False))
    with pytest.raises(ShapeError):
        net(rng.random((2, 5)))
    cloudy = build_solar_net(small_spec("mlp", True))
    with pytest.raises(ShapeError):
        cloudy(rng.random((2, 6)), rng.random((3, 6)))


def test_spec_rejects_untuned_values():
    with pytest.raises(ValidationError):
        SolarNetSpec(kind="cnn1d", units=48, epochs=500)
    with pytest.raises(ValidationError):
        SolarNetSpec(kind="lstm", units=32, epochs=500, dropout=0.2)
    with pytest.raises(ValidationError):
        SolarNetSpec(kind="mlp", units=4, epochs=50)
    with pytest.raises(ValidationError):
        SolarNetSpec(kind="cnn1d", units=32, kernel_size=5, epochs=500)


def test_cnn_features_are_time_constant_on_constant_input():
    net = build_solar_net(small_spec("cnn1d", True, kernel_size=2))
    assert isinstance(net, CNN1dNet)
    series = np.stack([np.full((1, 6), 0.4), np.full((1, 6), 0.2)], axis=-1)
    features = net.features(series).data
    assert features.shape == (1, 32, 6)
    np.testing.assert_allclose(features, np.broadcast_to(features[..., :1], features.shape), atol=1e-12)


def test_dropout_only_acts_in_training(rng):
    net = build_solar_net(small_spec("mlp", False, dropout=0.5))
    power = rng.random((4, 6))
    np.testing.assert_array_equal(net(power).data, net(power).data)
    trained = net(power, train=True, rng=np.random.default_rng(0)).data
    assert not np.allclose(trained, net(power).data)


def test_lstm_input_weights_scale_with_input_width():
    params = build_solar_net(small_spec("lstm", True, num_layers=2)).parameters()
    first, second = params["lstm0_wx"].data, params["lstm1_wx"].data
    assert first.shape == (128, 2) and second.shape == (128, 32)
    assert np.abs(first).max() <= 1.0 / np.sqrt(2)
    assert np.abs(first).max() > 1.0 / np.sqrt(32)
    assert np.abs(second).max() <= 1.0 / np.sqrt(32)
    assert np.abs(params["lstm0_wh"].data).max() <= 1.0 / np.sqrt(32)


@pytest.mark.parametrize("kind", ["mlp", "cnn1d", "lstm"])
def test_save_load_round_trip(kind, tmp_path, rng):
    net = build_solar_net(small_spec(kind, True, seed=9))
    path = net.save(solar_checkpoint_path(tmp_path, "site_01", kind, True))
    assert path.name == f"solar_site_01_{kind}_with_clouds.ckpt"
    loaded = load_solar_net(path)
    power, clouds = rng.random((3, 6)), rng.random((3, 6))
    np.testing.assert_array_equal(net(power, clouds).data, loaded(power, clouds).data)
    assert loaded.spec == net.spec


def test_load_rejects_cloud_checkpoint(tmp_path):
    from src.cloud.model import CloudForecaster
    from src.core.models import CloudNetSpec

    path = CloudForecaster(CloudNetSpec(hidden_channels=2)).save(tmp_path / "cloud_x.ckpt")
    with pytest.raises(ConfigurationError):
        load_solar_net(path)


def test_cloud_feature_scales_pixels():
    np.testing.assert_allclose(cloud_feature([0, 51, 255]), [0.0, 0.2, 1.0])
