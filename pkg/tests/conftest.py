"""Shared fixtures: tiny configs and fleets that keep every test fast"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.core.models import GridGeo, SolarNetSpec, SynthConfig, parse_config  # noqa: E402
from src.data.synth import generate_fleet  # noqa: E402


def tiny_synth_config(**overrides) -> SynthConfig:
    values = dict(
        seed=3,
        n_sites=2,
        grid=GridGeo(height=8, width=8),
        n_days=2,
        blob_count=4,
        altitude_blob_count=2,
        blob_radius=(1.0, 2.5),
        noise_std=0.0,
    )
    values.update(overrides)
    return parse_config(SynthConfig, values)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_fleet():
    return generate_fleet(tiny_synth_config())


@pytest.fixture
def mlp_spec():
    return SolarNetSpec(kind="mlp", num_layers=1, units=4, epochs=100)
