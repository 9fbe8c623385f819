from functools import lru_cache
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level knobs; experiment hyperparameters live in ExperimentConfig."""

    model_config = SettingsConfigDict(
        env_prefix="RFF_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    log_level: str = Field(default="INFO", description="Root logger level e.g. DEBUG/INFO/WARNING")

    default_out_dir: str = Field(default="runs/default")
    ledger_filename: str = Field(default="ledger.db")

    latency_runs: int = Field(default=1000, ge=1)
    latency_warmup: int = Field(default=20, ge=0)
    featurize_workers: int = Field(default=1, ge=1)

    def ledger_path(self, out_dir: Path) -> str:
        if self.ledger_filename == ":memory:" or self.ledger_filename.startswith("sqlite://"):
            return self.ledger_filename
        return str(out_dir / self.ledger_filename)


@lru_cache
def get_settings() -> Settings:
    return Settings()
