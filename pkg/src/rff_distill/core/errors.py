from __future__ import annotations

from typing import Any

from pydantic import ValidationError


class RffDistillError(Exception):
    """Base class for errors raised by rff-distill."""


class ShapeError(RffDistillError, ValueError):
    """Operand shapes do not conform to a primitive's rule."""


class ConfigError(RffDistillError):
    def __init__(self, message: str, field_path: str | None = None) -> None:
        super().__init__(message)
        self.field_path = field_path


class FleetSeparationError(RffDistillError):
    """No fleet with the requested pairwise separation could be drawn."""


class ArchiveFormatError(RffDistillError):
    def __init__(self, message: str, byte_offset: int | None = None) -> None:
        super().__init__(message)
        self.byte_offset = byte_offset


class IngestError(RffDistillError):
    def __init__(self, message: str, byte_offset: int = 0) -> None:
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


class MissingArtifactError(RffDistillError):
    """A command needs an artifact that an earlier command should have produced."""


class NonFiniteLossError(RffDistillError):
    def __init__(
        self,
        message: str,
        last_good: dict[str, Any] | None = None,
        epoch: int | None = None,
    ) -> None:
        super().__init__(message)
        self.last_good = last_good or {}
        self.epoch = epoch


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_MISSING_DEPENDENCY = 3
EXIT_NUMERIC = 4


def exit_code_for(exc: BaseException) -> int:
    config_errors = (
        ValidationError,
        ConfigError,
        FleetSeparationError,
        IngestError,
        ArchiveFormatError,
    )
    if isinstance(exc, config_errors):
        return EXIT_CONFIG
    if isinstance(exc, MissingArtifactError):
        return EXIT_MISSING_DEPENDENCY
    if isinstance(exc, NonFiniteLossError):
        return EXIT_NUMERIC
    return EXIT_FAILURE
