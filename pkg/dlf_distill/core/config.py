"""Configuration management for dlf-distill."""

from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings, read from the environment (prefix ``DLF_``) or ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="DLF_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application
    app_name: str = "dlf-distill"
    app_version: str = "0.1.0"
    app_env: str = "development"
    debug: bool = True

    # Logging
    log_level: str = "INFO"

    # Artifacts
    output_dir: Path = Path("runs")
    default_seed: int = 0

    # Optional UCI Concrete table for the desk-scale reproduction run
    concrete_csv: Path | None = None


@lru_cache
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()
