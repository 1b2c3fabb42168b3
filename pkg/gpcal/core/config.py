"""
Process configuration using Pydantic Settings.

Run-level options (sampler, priors, model) live in gpcal.schemas.config; this
module only holds what belongs to the process.

Environment Variables:
- GPCAL_LOG_LEVEL: Logging level (default: INFO)
- GPCAL_LOG_FILE: Optional log file path
- GPCAL_WORKERS: Threads evaluating chains of one generation (default: 1)

Values may also come from a .env file in the working directory.

Version: 1.0.0
"""

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseSettings):
    """Log verbosity, log destination and chain-evaluation threads"""

    log_level: str = Field(default="INFO", alias="GPCAL_LOG_LEVEL")
    log_file: str | None = Field(default=None, alias="GPCAL_LOG_FILE")

    # Chain-level concurrency inside one generation
    workers: int = Field(default=1, ge=1, alias="GPCAL_WORKERS")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        level = v.strip().upper()
        if level not in LOG_LEVELS:
            raise ValueError(f"Unknown log level {v!r}; expected one of {', '.join(LOG_LEVELS)}")
        return level


_settings: Settings | None = None


def get_settings() -> Settings:
    """
    Cached process settings, read from the environment on first call.

    Raises:
        ValidationError: If an environment variable holds an invalid value
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reload_settings() -> Settings:
    """Drop the cached settings and read the environment again."""
    global _settings
    _settings = None
    return get_settings()
