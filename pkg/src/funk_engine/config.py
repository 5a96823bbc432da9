"""
Configuration Management for funkrad

Handles environment variables, settings validation, and configuration defaults
for geometry sampling, the Kaczmarz solver and the runtime.
"""

from typing import Optional
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class GeometrySettings(BaseSettings):
    """Default scan geometry sampling."""

    detector_radius: float = Field(default=1.5, gt=1.0)
    n_detectors: int = Field(default=180, ge=2)
    n_radii: int = Field(default=160, ge=2)

    model_config = SettingsConfigDict(
        env_prefix="FUNKRAD_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


class SolverSettings(BaseSettings):
    """Kaczmarz iteration and inner CG defaults."""

    omega: float = Field(default=1.0)
    theta_rel: float = Field(default=1e-3, gt=0.0)
    max_iters: int = Field(default=50, ge=1)
    stop_tol: float = Field(default=1e-6, ge=0.0)
    cg_tol: float = Field(default=1e-8, gt=0.0)
    cg_max_iters: int = Field(default=400, ge=1)
    power_iters: int = Field(default=30, ge=1)
    seed: int = Field(default=0)

    model_config = SettingsConfigDict(
        env_prefix="FUNKRAD_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    @field_validator("omega")
    @classmethod
    def validate_omega(cls, v):
        if not 0.0 < v < 2.0:
            raise ValueError("Relaxation omega must lie strictly between 0 and 2")
        return v


class RuntimeSettings(BaseSettings):
    """Process-level settings: parallelism, logging, caches and assembly limits."""

    threads: int = Field(default=1, ge=1)
    log_level: str = Field(default="WARNING")
    log_format: str = Field(default="json")
    operator_cache_size: int = Field(default=4, ge=1)
    spectrum_max_cells: int = Field(default=1200, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="FUNKRAD_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator("log_format")
    @classmethod
    def validate_log_format(cls, v):
        if v not in {"json", "console"}:
            raise ValueError("Log format must be 'json' or 'console'")
        return v

    @model_validator(mode="after")
    def validate_cache(self):
        if self.operator_cache_size > 64:
            raise ValueError("Operator cache size above 64 would hold too many assembled matrices")
        return self


class Config:
    """Main configuration class that combines all settings."""

    def __init__(self):
        load_dotenv()

        self.geometry = GeometrySettings()
        self.solver = SolverSettings()
        self.runtime = RuntimeSettings()

    def as_dict(self) -> dict:
        """Resolved settings, grouped by section."""
        return {
            "geometry": self.geometry.model_dump(),
            "solver": self.solver.model_dump(),
            "runtime": self.runtime.model_dump(),
        }


# Global configuration instance - lazy-loaded
_config: Optional[Config] = None


def get_config() -> Config:
    """Get the global configuration instance."""
    global _config
    if _config is None:
        _config = Config()
    return _config


def reset_config() -> None:
    """Drop the cached configuration so the next get_config() re-reads the environment."""
    global _config
    _config = None
