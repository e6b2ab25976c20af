"""Application configuration and environment management."""

from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Configuration loaded from environment variables.

    Attributes:
        threads: Cap on the experiment worker pool.
        output_dir: Default directory for emitted artifacts.
        delta: Failure probability used in confidence widths.
        beta_constant: Constant c in beta = c * log(T * H * |F| / delta).
        rf_c1: Constant c1 of the offline width in reward-free runs.
        rf_c2: Constant c2 added to c1 for the exploration width.
        loss_recompute_interval: Rounds between exact recomputations of running losses.
        membership_tolerance: L-infinity tolerance for family membership tests.
        sec_budget: Evaluation budget for exhaustive SEC searches.
        bound_slack: Multiplicative slack applied to proof-extracted constants.
    """

    threads: int = Field(default=4, ge=1, alias="COVERLAB_THREADS")
    output_dir: Path = Field(default=Path("results"), alias="COVERLAB_OUTPUT_DIR")
    delta: float = Field(default=0.05, gt=0.0, le=1.0, alias="COVERLAB_DELTA")
    beta_constant: float = Field(default=2.0, ge=0.0, alias="COVERLAB_BETA_CONSTANT")
    rf_c1: float = Field(default=1.0, ge=0.0, alias="COVERLAB_RF_C1")
    rf_c2: float = Field(default=1.0, ge=0.0, alias="COVERLAB_RF_C2")
    loss_recompute_interval: int = Field(
        default=256, ge=1, alias="COVERLAB_LOSS_RECOMPUTE_INTERVAL"
    )
    membership_tolerance: float = Field(
        default=1e-9, gt=0.0, alias="COVERLAB_MEMBERSHIP_TOLERANCE"
    )
    sec_budget: int = Field(default=10_000_000, ge=1, alias="COVERLAB_SEC_BUDGET")
    bound_slack: float = Field(default=1.5, ge=1.0, alias="COVERLAB_BOUND_SLACK")

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        populate_by_name=True,
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Return cached application settings instance."""
    return Settings()
