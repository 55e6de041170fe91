"""
Environment-driven settings.

Values are read from the process environment (and a local `.env` file when
present) using the `DAN_` prefix, e.g. `DAN_SEED=7`.
"""
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables
load_dotenv()

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class Settings(BaseSettings):
    """Process-wide defaults that CLI flags and config files may override."""

    model_config = SettingsConfigDict(env_prefix="DAN_", extra="ignore")

    seed: int = Field(default=0, ge=0, description="Default seed when a command receives none")
    log_level: str = Field(default="INFO", description="Root logging level")
    log_format: str = Field(default=DEFAULT_LOG_FORMAT)
    threads: int = Field(default=1, ge=1, description="Default worker count")


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return the cached settings instance."""
    return Settings()
