"""Package initialization for src.metrics"""

from src.metrics.report import (
    SkillReport,
    aggregate_report,
    condition_shares,
    horizon_errors,
    recompute_fleet_skill,
)
from src.metrics.skill import CONDITIONS, classify_sample, classify_sky, conditions_of, mae, rmse, skill_score
from src.metrics.ssim import ssim, ssim_loss

__all__ = [
    'SkillReport',
    'aggregate_report',
    'condition_shares',
    'horizon_errors',
    'recompute_fleet_skill',
    'CONDITIONS',
    'classify_sample',
    'classify_sky',
    'conditions_of',
    'mae',
    'rmse',
    'skill_score',
    'ssim',
    'ssim_loss',
]
