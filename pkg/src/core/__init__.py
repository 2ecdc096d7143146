"""Package initialization for src.core"""

from src.core.config import settings
from src.core.models import (
    GridGeo,
    SynthConfig,
    CloudNetSpec,
    SolarNetSpec,
    SolarSearchSpace,
    TrainConfig,
    ExperimentConfig,
    Scenario,
    RunManifest,
)
from src.core.exceptions import (
    PipelineError,
    ShapeError,
    GradientError,
    ConfigurationError,
    DataFormatError,
    ManifestError,
    TrainingError,
    MissingArtifactError,
    ScenarioMismatchError,
    OutOfFootprintError,
)
from src.core.runtime import StageTimer, timed_stage, run_jobs, hash_tree, package_versions

__all__ = [
    # Config
    'settings',
    # Models
    'GridGeo',
    'SynthConfig',
    'CloudNetSpec',
    'SolarNetSpec',
    'SolarSearchSpace',
    'TrainConfig',
    'ExperimentConfig',
    'Scenario',
    'RunManifest',
    # Exceptions
    'PipelineError',
    'ShapeError',
    'GradientError',
    'ConfigurationError',
    'DataFormatError',
    'ManifestError',
    'TrainingError',
    'MissingArtifactError',
    'ScenarioMismatchError',
    'OutOfFootprintError',
    # Runtime
    'StageTimer',
    'timed_stage',
    'run_jobs',
    'hash_tree',
    'package_versions',
]
