"""Layout-driven reader for raw interleaved I/Q capture files."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from ..core.errors import IngestError
from ..signals.synthesis import IqFrame

logger = logging.getLogger(__name__)

I16_SCALE = 1.0 / 32768.0
_SAMPLE_DTYPES = {"cf32": np.dtype("<f4"), "ci16": np.dtype("<i2")}


class IngestLayout(BaseModel):
    """How to cut a capture into frames and where its labels come from.

    ``label`` applies one device id to every frame of the file. ``manifest`` names a
    JSON sidecar mapping frame index (as a string) to device id.
    """

    encoding: Literal["cf32", "ci16"] = "cf32"
    frame_length: int = Field(default=512, gt=0)
    label: int | None = Field(default=None, ge=0)
    manifest: str | None = None


def _load_manifest(path: Path) -> dict[int, int]:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"unreadable label manifest {path}: {exc}", 0) from exc
    if not isinstance(raw, dict):
        raise IngestError(f"label manifest {path} must be an object of frame index -> label", 0)
    labels: dict[int, int] = {}
    for key, value in raw.items():
        try:
            labels[int(key)] = int(value)
        except (TypeError, ValueError) as exc:
            raise IngestError(
                f"label manifest {path} entry {key!r}: {value!r} is not an index -> label pair",
                0,
            ) from exc
    return labels


def ingest_iq(path: Path, layout: IngestLayout) -> list[IqFrame]:
    if layout.encoding not in _SAMPLE_DTYPES:
        raise IngestError(f"unknown sample encoding {layout.encoding!r}", 0)
    dtype = _SAMPLE_DTYPES[layout.encoding]
    frame_bytes = 2 * layout.frame_length * dtype.itemsize
    payload = Path(path).read_bytes()
    count, remainder = divmod(len(payload), frame_bytes)
    if remainder:
        raise IngestError(
            f"{path} ends with a partial frame of {remainder} bytes"
            f" ({frame_bytes} bytes per frame)",
            count * frame_bytes,
        )
    if layout.label is None and layout.manifest is None:
        raise IngestError("layout needs either a per-file label or a sidecar manifest", 0)
    labels = _load_manifest(Path(layout.manifest)) if layout.manifest else {}

    raw = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    if layout.encoding == "ci16":
        raw = raw * I16_SCALE
    interleaved = raw.reshape(count, layout.frame_length, 2)
    frames: list[IqFrame] = []
    for index in range(count):
        if layout.manifest:
            if index not in labels:
                raise IngestError(
                    f"manifest {layout.manifest} has no label for frame {index}",
                    index * frame_bytes,
                )
            label = labels[index]
        else:
            label = int(layout.label)  # type: ignore[arg-type]
        offset = index * frame_bytes
        samples = interleaved[index]
        if not np.all(np.isfinite(samples)):
            raise IngestError(f"frame {index} of {path} holds non-finite samples", offset)
        frames.append(
            IqFrame(
                i=samples[:, 0].copy(),
                q=samples[:, 1].copy(),
                label=label,
                meta={"source": str(path), "byte_offset": offset, "seed": 0},
            )
        )
    logger.info("Ingested %s frames of %s samples from %s", count, layout.frame_length, path)
    return frames
