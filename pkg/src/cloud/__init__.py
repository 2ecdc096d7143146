"""Package initialization for src.cloud"""

from src.cloud.attention import CBAM, SelfAttentionMemory, attend
from src.cloud.cells import CBAMConvLSTMCell, CellState, ConvLSTMCell, SAConvLSTMCell, build_cell
from src.cloud.model import (
    CloudForecaster,
    PersistenceCloudModel,
    load_cloud_model,
    rollout,
    teacher_forced,
)

__all__ = [
    'CBAM',
    'SelfAttentionMemory',
    'attend',
    'CBAMConvLSTMCell',
    'CellState',
    'ConvLSTMCell',
    'SAConvLSTMCell',
    'build_cell',
    'CloudForecaster',
    'PersistenceCloudModel',
    'load_cloud_model',
    'rollout',
    'teacher_forced',
]
