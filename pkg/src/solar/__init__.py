"""Package initialization for src.solar"""

from src.solar.nets import (
    CNN1dNet,
    LSTMNet,
    MLPNet,
    SolarNet,
    build_solar_net,
    cloud_feature,
    load_solar_net,
    persistence_power,
    solar_checkpoint_path,
)

__all__ = [
    'CNN1dNet',
    'LSTMNet',
    'MLPNet',
    'SolarNet',
    'build_solar_net',
    'cloud_feature',
    'load_solar_net',
    'persistence_power',
    'solar_checkpoint_path',
]
