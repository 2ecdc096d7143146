"""Package initialization for src.pipeline"""

from src.pipeline.benchmark import (
    PERSISTENCE_NET,
    evaluate_cloud_model,
    extract_site_pixel,
    forecast_frames,
    make_cloud_input,
    run_benchmark,
    write_outputs,
)
from src.pipeline.diagnostics import CheckResult, results_table, run_gradcheck_suite
from src.pipeline.stages import (
    cloud_batch_loss,
    cloud_checkpoint_path,
    cloud_val_loss,
    search_cloud_specs,
    train_cloud_model,
    train_fleet,
    train_site,
    train_solar_net,
)

__all__ = [
    'PERSISTENCE_NET',
    'evaluate_cloud_model',
    'extract_site_pixel',
    'forecast_frames',
    'make_cloud_input',
    'run_benchmark',
    'write_outputs',
    'CheckResult',
    'results_table',
    'run_gradcheck_suite',
    'cloud_batch_loss',
    'cloud_checkpoint_path',
    'cloud_val_loss',
    'search_cloud_specs',
    'train_cloud_model',
    'train_fleet',
    'train_site',
    'train_solar_net',
]
