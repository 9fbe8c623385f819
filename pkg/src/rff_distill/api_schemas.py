from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .controller.config import ControllerConfig
from .core.errors import ConfigError
from .distill.trainer import DistillConfig, TrainConfig
from .features.augment import AugmentPolicy
from .features.dataset import FeaturizerConfig
from .features.ingest import IngestLayout
from .networks.student import StudentConfig
from .networks.teacher import TeacherConfig
from .signals.channel import ChannelConfig
from .signals.fingerprint import FleetRanges
from .signals.synthesis import WaveformConfig

MAX_SEED = 2**64 - 1


class FleetSpec(BaseModel):
    num_devices: int = Field(
        default=8, ge=2, description="classification needs at least two devices"
    )
    ranges: FleetRanges = Field(default_factory=FleetRanges)


class DatasetSpec(BaseModel):
    per_device: int = Field(default=200, ge=10)
    channels: List[ChannelConfig] = Field(default_factory=lambda: [ChannelConfig.from_snr_db(10.0)])
    waveform: WaveformConfig = Field(default_factory=WaveformConfig)
    featurizer: FeaturizerConfig = Field(default_factory=FeaturizerConfig)
    augmentation: AugmentPolicy = Field(default_factory=AugmentPolicy)

    @field_validator("channels")
    @classmethod
    def _at_least_one(cls, value: list[ChannelConfig]) -> list[ChannelConfig]:
        if not value:
            raise ValueError("at least one channel profile is required")
        if len({profile.n_samples for profile in value}) != 1:
            raise ValueError("all channel profiles must share n_samples")
        return value


class IngestSpec(BaseModel):
    path: str
    layout: IngestLayout = Field(default_factory=IngestLayout)


class ExperimentConfig(BaseModel):
    """Everything a run depends on besides the code version."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    out_dir: Optional[str] = None
    fleet: FleetSpec = Field(default_factory=FleetSpec)
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    ingest: Optional[IngestSpec] = None
    teacher: TeacherConfig = Field(default_factory=TeacherConfig)
    teacher_training: TrainConfig = Field(default_factory=TrainConfig)
    student: StudentConfig = Field(default_factory=StudentConfig)
    distill: DistillConfig = Field(default_factory=lambda: DistillConfig(epochs=100))
    controller: ControllerConfig = Field(default_factory=ControllerConfig)
    fixed_taus: List[float] = Field(default_factory=lambda: [2.0, 4.0, 6.0, 8.0])

    @field_validator("fixed_taus")
    @classmethod
    def _positive_taus(cls, value: list[float]) -> list[float]:
        if any(tau <= 0 for tau in value):
            raise ValueError("fixed temperatures must be positive")
        return value

    @model_validator(mode="after")
    def _class_count_follows_fleet(self) -> "ExperimentConfig":
        classes = self.fleet.num_devices
        if self.teacher.num_classes != classes:
            self.teacher = self.teacher.model_copy(update={"num_classes": classes})
        if self.student.num_classes != classes:
            self.student = self.student.model_copy(update={"num_classes": classes})
        return self

    def with_num_classes(self, classes: int) -> "ExperimentConfig":
        fleet = self.fleet.model_copy(update={"num_devices": classes})
        return ExperimentConfig.model_validate({**self.model_dump(), "fleet": fleet.model_dump()})

    def canonical_json(self) -> str:
        payload = self.model_dump(mode="json", exclude={"out_dir"})
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def field_path(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ())) or "<root>"


def load_experiment_config(path: Path | None, overrides: dict | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file {path} not found", field_path="--config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"config file {path} is not valid JSON: {exc}", field_path="--config"
            ) from exc
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        path_str = field_path(exc)
        message = exc.errors()[0]["msg"]
        raise ConfigError(f"invalid config at {path_str}: {message}", field_path=path_str) from exc


class ModelReport(BaseModel):
    mode: str
    accuracy: float
    param_count: int
    latency_ms_median: Optional[float] = None
    worst_class: Optional[int] = None
    worst_class_recall: Optional[float] = None
    silhouette: Optional[float] = None
    trace_csv: Optional[str] = None
    confusion_csv: Optional[str] = None
    checkpoint: Optional[str] = None
    tau_stats: Optional[dict] = None


class RunReport(BaseModel):
    command: str
    config_hash: str
    seed: int
    models: List[ModelReport] = Field(default_factory=list)
    ranking: List[str] = Field(default_factory=list)
    weak_class_gain: Optional[dict] = None
    peak_rss_mb: Optional[float] = None
    artifacts: dict[str, str] = Field(default_factory=dict)

    def model(self, mode: str) -> ModelReport:
        for item in self.models:
            if item.mode == mode:
                return item
        raise KeyError(mode)
