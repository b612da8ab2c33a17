"""
Application settings.

Settings come from ``BARRIERSTL_``-prefixed environment variables and an
optional ``.env`` file, read by pydantic-settings. Scenario-specific
configuration lives in ``barrierstl.models.scenario``.
"""

import os
from functools import lru_cache
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

ENV_PREFIX = "BARRIERSTL_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    """Process-wide settings."""

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, env_file=".env", extra="ignore")

    log_level: str = Field("INFO", description="Root logging level")
    environment: str = Field("development", description="Deployment environment")
    output_dir: Path = Field(Path("runs"), description="Default directory for run artifacts")

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        value = value.upper()
        if value not in LOG_LEVELS:
            raise ValueError(f"log level must be one of {', '.join(LOG_LEVELS)}")
        return value


def load_settings(env_file: str | None = None) -> Settings:
    """Build settings, reading ``env_file`` (or ``$DOTENV_PATH``) instead of ``.env`` when given."""
    return Settings(_env_file=env_file or os.environ.get("DOTENV_PATH", ".env"))


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Cached settings for the running process."""
    return load_settings()
