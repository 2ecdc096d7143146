"""Package initialization for src.training"""

from src.training.loop import EarlyStopping, ReduceLROnPlateau, TrainResult, train_loop
from src.training.optim import Adam, OptimizerState, adam_step
from src.training.search import (
    TrialResult,
    cloud_grid,
    grid_search,
    grid_search_cloud,
    random_search_solar,
    sample_solar_spec,
    write_search_results,
)

__all__ = [
    'EarlyStopping',
    'ReduceLROnPlateau',
    'TrainResult',
    'train_loop',
    'Adam',
    'OptimizerState',
    'adam_step',
    'TrialResult',
    'cloud_grid',
    'grid_search',
    'grid_search_cloud',
    'random_search_solar',
    'sample_solar_spec',
    'write_search_results',
]
