"""
Application settings.

Environment-driven defaults for the command-line tools. Values are read from
variables prefixed with ``RBVRISK_`` (for example ``RBVRISK_OUTPUT_DIR``).
"""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings."""

    model_config = SettingsConfigDict(env_prefix="RBVRISK_", case_sensitive=False)

    OUTPUT_DIR: str = Field("results", description="Default directory for reports")
    LOG_LEVEL: str = Field("INFO", description="Root log level")
    N_JOBS: int = Field(1, ge=-1, description="Workers for feature and pair sweeps")


settings = Settings()
