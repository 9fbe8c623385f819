from __future__ import annotations

import itertools
import json
import logging
import math
from pathlib import Path
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator

from ..core.errors import FleetSeparationError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MAX_REJECTION_DRAWS = 1000


class DeviceFingerprint(BaseModel):
    """Transmitter impairments that make one device identifiable."""

    model_config = ConfigDict(frozen=True)

    device_id: int = Field(ge=0)
    alpha: float = Field(gt=0.0, le=1.0, description="gain imbalance")
    phi: float = Field(gt=0.0, le=TWO_PI, description="phase imbalance in radians")
    f0: float = Field(ge=0.0, description="residual carrier offset in Hz")

    @field_validator("f0")
    @classmethod
    def _finite_offset(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("f0 must be finite")
        return value


class SeparationFloors(BaseModel):
    """A pair of devices is separated if any one parameter gap reaches its floor."""

    alpha: float = Field(default=0.01, ge=0.0)
    phi: float = Field(default=0.02, ge=0.0)
    f0: float = Field(default=20.0, ge=0.0)


class FleetRanges(BaseModel):
    alpha: Tuple[float, float] = (0.6, 1.0)
    phi: Tuple[float, float] = (0.1, 1.5)
    f0: Tuple[float, float] = (1.0, 500.0)
    floors: SeparationFloors = Field(default_factory=SeparationFloors)

    @model_validator(mode="after")
    def _inside_fingerprint_invariants(self) -> "FleetRanges":
        for name, (low, high) in (("alpha", self.alpha), ("phi", self.phi), ("f0", self.f0)):
            if low > high:
                raise ValueError(f"{name} range is empty: {low} > {high}")
        if not (0.0 < self.alpha[0] and self.alpha[1] <= 1.0):
            raise ValueError("alpha range must lie in (0, 1]")
        if not (0.0 < self.phi[0] and self.phi[1] <= TWO_PI):
            raise ValueError("phi range must lie in (0, 2*pi]")
        if self.f0[0] < 0.0:
            raise ValueError("f0 range must be nonnegative")
        return self


def is_separated(a: DeviceFingerprint, b: DeviceFingerprint, floors: SeparationFloors) -> bool:
    return (
        abs(a.alpha - b.alpha) >= floors.alpha
        or abs(a.phi - b.phi) >= floors.phi
        or abs(a.f0 - b.f0) >= floors.f0
    )


def sample_fleet(
    rng: np.random.Generator, size: int, ranges: FleetRanges | None = None
) -> list[DeviceFingerprint]:
    """Draw ``size`` pairwise-separated fingerprints by rejection sampling."""
    if size < 2:
        raise ValueError(f"a fleet needs at least 2 devices, got {size}")
    ranges = ranges or FleetRanges()
    fleet: list[DeviceFingerprint] = []
    rejections = 0
    while len(fleet) < size:
        candidate = DeviceFingerprint(
            device_id=len(fleet),
            alpha=float(rng.uniform(*ranges.alpha)),
            phi=float(rng.uniform(*ranges.phi)),
            f0=float(rng.uniform(*ranges.f0)),
        )
        if all(is_separated(candidate, other, ranges.floors) for other in fleet):
            fleet.append(candidate)
            continue
        rejections += 1
        if rejections >= MAX_REJECTION_DRAWS:
            raise FleetSeparationError(
                f"could not place device {len(fleet)} of {size} after {rejections} rejected draws; "
                f"ranges alpha={ranges.alpha} phi={ranges.phi} f0={ranges.f0} "
                "are too narrow for floors "
                f"{ranges.floors.model_dump()}"
            )
    logger.debug("Sampled fleet of %s devices with %s rejected draws", size, rejections)
    return fleet


def min_pairwise_gaps(fleet: list[DeviceFingerprint]) -> dict[str, float]:
    gaps = {"alpha": math.inf, "phi": math.inf, "f0": math.inf}
    for a, b in itertools.combinations(fleet, 2):
        gaps["alpha"] = min(gaps["alpha"], abs(a.alpha - b.alpha))
        gaps["phi"] = min(gaps["phi"], abs(a.phi - b.phi))
        gaps["f0"] = min(gaps["f0"], abs(a.f0 - b.f0))
    return gaps


_FLEET_ADAPTER = TypeAdapter(list[DeviceFingerprint])


def save_fleet(path: Path, fleet: list[DeviceFingerprint]) -> None:
    payload = [fp.model_dump() for fp in fleet]
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_fleet(path: Path) -> list[DeviceFingerprint]:
    fleet = _FLEET_ADAPTER.validate_json(path.read_bytes())
    ids = [fp.device_id for fp in fleet]
    if sorted(ids) != list(range(len(fleet))):
        raise ValueError(f"fleet file {path} must number devices 0..{len(fleet) - 1}, got {ids}")
    return sorted(fleet, key=lambda fp: fp.device_id)
