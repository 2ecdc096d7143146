"""Custom exceptions for production error handling"""


class PipelineError(Exception):
    """Base exception for all pipeline errors"""
    pass


class ShapeError(PipelineError, ValueError):
    """Raised when tensor shapes are incompatible for an operation"""
    pass


class GradientError(PipelineError):
    """Raised when differentiation is impossible or produces non-finite values"""
    pass


class ConfigurationError(PipelineError):
    """Raised when configuration is invalid"""
    pass


class DataFormatError(PipelineError):
    """Raised when a dataset file cannot be parsed"""
    pass


class ManifestError(DataFormatError):
    """Raised when dataset contents disagree with the manifest"""
    pass


class TrainingError(PipelineError):
    """Raised when training cannot proceed (non-finite loss, empty splits)"""
    pass


class MissingArtifactError(PipelineError):
    """Raised when a required checkpoint or dataset is absent"""
    pass


class ScenarioMismatchError(PipelineError):
    """Raised when a cloud-input scenario does not match the net's lineage"""
    pass


class OutOfFootprintError(PipelineError, ValueError):
    """Raised when a location or pixel lies outside the image grid"""
    pass
