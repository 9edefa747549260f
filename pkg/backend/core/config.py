"""
Configuration management for the thermodynamic-formalism toolkit
Solver tolerances and run defaults are read from config/solver_defaults.yaml
"""

from pathlib import Path
from typing import Optional, Tuple, Type

from pydantic import BaseModel, Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    YamlConfigSettingsSource,
)

DEFAULTS_PATH = Path(__file__).parent.parent.parent / "config" / "solver_defaults.yaml"


class PowerIterationConfig(BaseModel):
    """Power iteration termination settings"""

    eigen_tol: float = 1e-14  # successive eigenvalue estimates
    residual_tol: float = 1e-12  # relative residual
    max_iterations: int = 1_000_000
    squarings: int = 6  # iterate with M^(2^squarings)


class SemigroupConfig(BaseModel):
    """Semigroup evaluation settings"""

    uniformization_tol: float = 1e-12
    series_tol: float = 1e-10  # default Poisson tail target for the path series
    confluence_tol: float = 1e-8
    prune_ratio: float = 1e-16


class NewtonConfig(BaseModel):
    """Damped Newton settings for the rate-function optimizers"""

    gradient_tol: float = 1e-10
    max_iterations: int = 10_000
    armijo: float = 1e-4
    backtrack: float = 0.5
    hessian_step: float = 1e-5


class MonteCarloConfig(BaseModel):
    """Trajectory sampling settings"""

    workers: int = 1
    chunk: int = 256  # random draws fetched per refill
    min_ess_fraction: float = 0.05  # below this share of effective samples an SCGF estimate is flagged


class Settings(BaseSettings):
    """Main toolkit settings"""

    default_theta: float = 0.5
    audit_count: int = 200
    dual_restarts: int = 5
    power: PowerIterationConfig = Field(default_factory=PowerIterationConfig)
    semigroup: SemigroupConfig = Field(default_factory=SemigroupConfig)
    newton: NewtonConfig = Field(default_factory=NewtonConfig)
    montecarlo: MonteCarloConfig = Field(default_factory=MonteCarloConfig)

    model_config = SettingsConfigDict(yaml_file=DEFAULTS_PATH, extra="ignore")

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # No environment sources: runs depend only on files and flags
        return (init_settings, YamlConfigSettingsSource(settings_cls))


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get global settings instance"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Drop the cached settings so the next call re-reads the defaults file"""
    global _settings
    _settings = None
