"""
Configuration Management using Pydantic Settings

Loads from .env file, no hardcoded secrets.
Environment variables override defaults.

Only ambient runtime behaviour lives here (logging, default output
location). Anything that changes numbers - seeds, grid sizes, learning
rates - belongs to the experiment JSON files in src.core.models so a run
is reproducible from its manifest alone.
"""

from pathlib import Path
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Application configuration

    Supports .env file and environment variable overrides.

    Example .env:
        LOG_LEVEL=DEBUG
        OUTPUT_ROOT=runs
    """

    # Output Configuration
    output_root: Path = Path("output")

    # Logging Configuration
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    console_format: str = "%(levelname)s: %(message)s"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"  # Ignore extra env vars
    )


# Singleton instance
settings = Settings()
