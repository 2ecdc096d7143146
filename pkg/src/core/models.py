"""
Pydantic Models for Experiment Configuration

Business reason: Every artifact-producing command is driven by a JSON
document. Validating it up front fails fast, before minutes of training
are spent on an impossible configuration.
"""

from datetime import datetime
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.core.exceptions import ConfigurationError

M = TypeVar("M", bound=BaseModel)


# ============================================================================
# GEOGRAPHY
# ============================================================================

class GridGeo(BaseModel):
    """
    Geographic footprint of the image grid

    The grid centre sits at (center_lat, center_lon); every pixel covers
    pixel_km x pixel_km on the ground.
    """
    model_config = ConfigDict(frozen=True)

    height: int = Field(default=60, ge=2)
    width: int = Field(default=60, ge=2)
    center_lat: float = Field(default=-31.95, ge=-89.0, le=89.0)
    center_lon: float = Field(default=115.86, ge=-180.0, le=180.0)
    pixel_km: float = Field(default=2.0, gt=0)


# ============================================================================
# SYNTHETIC DATA
# ============================================================================

class SynthConfig(BaseModel):
    """
    Synthetic fleet generator configuration

    Identical configs produce bit-identical datasets.

    Attributes:
        blob_growth: blob lifecycle frequency in cycles per step (radius swings +-50%)
        clear_fraction: share of all pixels that are exactly 0 (clear sky)
        high_cloud_fraction: share of all pixels brighter than 50 (forced to 0
            when clear_fraction is 1)
        low_slope: attenuation at a saturated low cloud (pixel 50) is 1 - low_slope
        high_intercept / high_slope: tau just above 50 and its drop up to 255
    """
    seed: int = 7
    n_sites: int = Field(default=10, ge=1)
    grid: GridGeo = GridGeo(height=24, width=24)
    start: datetime = datetime(2021, 1, 1, 0, 0)
    n_days: int = Field(default=33, ge=1)
    cadence_minutes: int = Field(default=10, ge=1)

    # Cloud field
    blob_count: int = Field(default=40, ge=0)
    altitude_blob_count: int = Field(default=12, ge=0)
    blob_radius: Tuple[float, float] = (2.0, 5.0)
    blob_speed: Tuple[float, float] = (0.1, 0.6)
    blob_growth: float = Field(default=0.02, ge=0)
    clear_fraction: float = Field(default=0.4657, ge=0, le=1)
    high_cloud_fraction: float = Field(default=0.1624, ge=0, le=1)

    # Power
    capacity_kw: Tuple[float, float] = (3.0, 10.0)
    sunrise_hour: float = Field(default=6.0, ge=0, lt=24)
    day_length_hours: float = Field(default=12.0, gt=0, le=24)
    low_slope: float = Field(default=0.9, ge=0, le=1)
    high_intercept: float = Field(default=0.55, ge=0, le=1)
    high_slope: float = Field(default=0.35, ge=0, le=1)
    noise_std: float = Field(default=0.01, ge=0)

    split_ratios: Tuple[float, float, float] = (0.72, 0.18, 0.10)

    @field_validator("blob_radius", "blob_speed", "capacity_kw")
    @classmethod
    def validate_range(cls, v):
        """Ranges are (low, high) with low <= high"""
        if v[0] > v[1] or v[0] < 0:
            raise ValueError(f"Invalid range {v}")
        return v

    @field_validator("split_ratios")
    @classmethod
    def validate_ratios(cls, v):
        if abs(sum(v) - 1.0) > 1e-9 or min(v) <= 0:
            raise ValueError(f"Split ratios must be positive and sum to 1, got {v}")
        return v

    @model_validator(mode="after")
    def validate_cloud_budget(self):
        """Cloud cover needs blobs to come from; a cloud-free fleet has no high clouds"""
        if self.clear_fraction >= 1.0:
            self.high_cloud_fraction = 0.0
        if self.clear_fraction < 1.0 and self.blob_count == 0:
            raise ValueError("blob_count is 0 but clear_fraction < 1 asks for clouds")
        if self.high_cloud_fraction > 1.0 - self.clear_fraction + 1e-12:
            raise ValueError("high_cloud_fraction exceeds the cloudy share")
        if self.high_cloud_fraction > 0 and self.altitude_blob_count == 0:
            raise ValueError("altitude_blob_count is 0 but high clouds are requested")
        if self.sunrise_hour + self.day_length_hours > 24:
            raise ValueError("daylight must end before midnight")
        return self

    @property
    def steps_per_day(self) -> int:
        return (24 * 60) // self.cadence_minutes

    @property
    def n_frames(self) -> int:
        return self.n_days * self.steps_per_day


# ============================================================================
# NETWORK SPECS
# ============================================================================

CellKind = Literal["convlstm", "cbam", "sa"]
SolarKind = Literal["mlp", "cnn1d", "lstm"]


class CloudNetSpec(BaseModel):
    """
    Architecture of a stacked cloud-forecasting network

    Grid-searched fields follow the cloud hyperparameter table:
    num_layers 1-6, hidden_channels {32, 64}, batch_size {16, 32}.
    """
    model_config = ConfigDict(frozen=True)

    cell: CellKind = "convlstm"
    num_layers: int = Field(default=1, ge=1, le=6)
    hidden_channels: int = Field(default=32, ge=1)
    kernel_size: int = Field(default=3, ge=1)
    batch_size: int = Field(default=16, ge=1)
    cbam_reduction: int = Field(default=4, ge=1)
    cbam_kernel: int = Field(default=7, ge=1)
    seed: int = 0

    @field_validator("kernel_size", "cbam_kernel")
    @classmethod
    def validate_odd(cls, v):
        if v % 2 == 0:
            raise ValueError(f"Kernel size must be odd for same padding, got {v}")
        return v

    def sort_key(self) -> Tuple:
        """Lexicographic order used to break search ties"""
        return (self.cell, self.num_layers, self.hidden_channels, self.batch_size,
                self.kernel_size, self.cbam_reduction, self.cbam_kernel)


TUNED_LEARNING_RATE = (1e-4, 1e-1)
TUNED_DROPOUT = (0.0, 0.5)
TUNED_LAYERS = (1, 5)
TUNED_EPOCHS = {"mlp": (100, 2000), "cnn1d": (500, 2000), "lstm": (500, 2000)}
TUNED_UNITS = {"mlp": list(range(1, 257)), "cnn1d": [32, 64], "lstm": [32, 64]}
TUNED_KERNELS = [2, 3]


class SolarNetSpec(BaseModel):
    """
    Hyperparameters of one solar-power forecasting net

    units means neurons per layer (mlp, lstm) or filters (cnn1d).
    epochs is the maximum; early stopping usually ends training sooner.
    """
    model_config = ConfigDict(frozen=True)

    kind: SolarKind = "mlp"
    num_layers: int = 2
    units: int = 32
    kernel_size: int = 3
    dropout: float = 0.0
    epochs: int = 500
    batch_size: int = 32
    learning_rate: float = 1e-3
    with_clouds: bool = True
    seed: int = 0

    @model_validator(mode="after")
    def validate_tuned_ranges(self):
        """Every value must fall inside the tuned hyperparameter ranges"""
        lo, hi = TUNED_LAYERS
        if not lo <= self.num_layers <= hi:
            raise ValueError(f"num_layers {self.num_layers} outside [{lo}, {hi}]")
        if self.units not in TUNED_UNITS[self.kind]:
            raise ValueError(f"units {self.units} not allowed for {self.kind}")
        if self.kind == "cnn1d" and self.kernel_size not in TUNED_KERNELS:
            raise ValueError(f"kernel_size {self.kernel_size} not in {TUNED_KERNELS}")
        lo, hi = TUNED_DROPOUT
        if not lo <= self.dropout <= hi:
            raise ValueError(f"dropout {self.dropout} outside [{lo}, {hi}]")
        if self.kind == "lstm" and self.dropout != 0.0:
            raise ValueError("lstm nets are not tuned with dropout")
        lo, hi = TUNED_EPOCHS[self.kind]
        if not lo <= self.epochs <= hi:
            raise ValueError(f"epochs {self.epochs} outside [{lo}, {hi}]")
        lo, hi = TUNED_LEARNING_RATE
        if not lo <= self.learning_rate <= hi:
            raise ValueError(f"learning_rate {self.learning_rate} outside [{lo}, {hi}]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        return self


class SolarSearchSpace(BaseModel):
    """
    Random-search ranges for one solar net kind

    Defaults are the full tuned ranges; a config may narrow them (for
    desk-scale runs) but never widen them, since sampled specs must stay
    valid SolarNetSpecs.
    """
    kind: SolarKind = "mlp"
    layers: Tuple[int, int] = TUNED_LAYERS
    units: Optional[List[int]] = None
    kernel_sizes: List[int] = TUNED_KERNELS
    dropout: Tuple[float, float] = TUNED_DROPOUT
    epochs: Optional[Tuple[int, int]] = None
    learning_rate: Tuple[float, float] = TUNED_LEARNING_RATE
    batch_size: Tuple[int, int] = (1, 64)

    @model_validator(mode="after")
    def fill_kind_defaults(self):
        if self.units is None:
            self.units = list(TUNED_UNITS[self.kind])
        if self.epochs is None:
            self.epochs = TUNED_EPOCHS[self.kind]
        if self.kind == "lstm":
            self.dropout = (0.0, 0.0)
        for name in ("layers", "dropout", "epochs", "learning_rate", "batch_size"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range {lo}..{hi} is empty")
        return self


# ============================================================================
# TRAINING
# ============================================================================

class TrainConfig(BaseModel):
    """
    Optimisation protocol

    Defaults follow the cloud-network protocol: 200 epochs, early stop
    after 10 epochs without validation improvement, Adam at 0.001,
    learning rate x0.1 after 5 stagnant epochs.
    """
    max_epochs: int = Field(default=200, ge=1)
    early_stop_patience: int = Field(default=10, ge=1)
    lr_init: float = Field(default=1e-3, gt=0)
    lr_factor: float = Field(default=0.1, gt=0, lt=1)
    lr_patience: int = Field(default=5, ge=1)
    batch_size: int = Field(default=16, ge=1)
    seed: int = 0


class ExperimentConfig(BaseModel):
    """
    Desk-scale knobs shared by the train/evaluate commands

    cloud_stride keeps every n-th anchor when building cloud training
    windows; solar_trials is the random-search budget per site and kind.
    """
    train: TrainConfig = TrainConfig()
    cloud_spec: CloudNetSpec = CloudNetSpec()
    cloud_stride: int = Field(default=1, ge=1)
    solar_trials: int = Field(default=1, ge=1)
    solar_search: Dict[str, SolarSearchSpace] = Field(default_factory=dict)
    solar_patience: int = Field(default=10, ge=1)


# ============================================================================
# PIPELINE
# ============================================================================

ScenarioTag = Literal["ground_truth_clouds", "forecasted_clouds", "persistence_clouds", "no_clouds"]


class Scenario(BaseModel):
    """
    Cloud input used at forecasting time

    Example:
        >>> Scenario(tag="forecasted_clouds", model_id="cbam").name
        'forecasted_clouds[cbam]'
    """
    model_config = ConfigDict(frozen=True)

    tag: ScenarioTag
    model_id: Optional[str] = None

    @model_validator(mode="after")
    def validate_model_id(self):
        if self.tag == "forecasted_clouds" and not self.model_id:
            raise ValueError("forecasted_clouds needs a cloud model id")
        if self.tag != "forecasted_clouds" and self.model_id:
            raise ValueError(f"{self.tag} does not take a cloud model id")
        return self

    @property
    def name(self) -> str:
        return f"{self.tag}[{self.model_id}]" if self.model_id else self.tag

    @property
    def uses_clouds(self) -> bool:
        return self.tag != "no_clouds"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        """Parse 'tag' or 'tag[model_id]'"""
        if text.endswith("]") and "[" in text:
            tag, model_id = text[:-1].split("[", 1)
            return cls(tag=tag, model_id=model_id)
        return cls(tag=text)


class RunManifest(BaseModel):
    """Everything needed to reproduce an artifact-producing command"""
    command: str
    config: dict
    seed: int
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)


# ============================================================================
# VALIDATION
# ============================================================================

def parse_config(model: Type[M], data: Mapping[str, Any]) -> M:
    """
    Validate raw config data against a model

    Fails fast on an impossible configuration, before any data is generated
    or any net is trained.

    Raises:
        ConfigurationError: If the data does not satisfy the model

    Example:
        >>> parse_config(SynthConfig, {"n_sites": 2}).n_sites
        2
    """
    try:
        return model.model_validate(dict(data))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid {model.__name__}: {e}") from e
