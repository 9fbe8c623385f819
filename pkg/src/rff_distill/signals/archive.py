"""Binary frame archive.

Little-endian layout: header ``b"DRFX"``, version u32, N u32, count u32, followed by
``count`` records of label u32, seed u64, N x f32 I, N x f32 Q.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core.errors import ArchiveFormatError
from .synthesis import IqFrame

logger = logging.getLogger(__name__)

MAGIC = b"DRFX"
VERSION = 1
HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("n", "<u4"), ("count", "<u4")])


def record_dtype(n_samples: int) -> np.dtype:
    return np.dtype(
        [("label", "<u4"), ("seed", "<u8"), ("i", "<f4", (n_samples,)), ("q", "<f4", (n_samples,))]
    )


def encode_frames(frames: Sequence[IqFrame]) -> bytes:
    if not frames:
        raise ValueError("cannot archive an empty frame list")
    n = frames[0].n_samples
    if any(frame.n_samples != n for frame in frames):
        raise ValueError("all archived frames must share one length")
    header = np.array([(MAGIC, VERSION, n, len(frames))], dtype=HEADER_DTYPE)
    records = np.zeros(len(frames), dtype=record_dtype(n))
    for idx, frame in enumerate(frames):
        records[idx]["label"] = frame.label
        records[idx]["seed"] = int(frame.meta.get("seed", 0))
        records[idx]["i"] = frame.i
        records[idx]["q"] = frame.q
    return header.tobytes() + records.tobytes()


def decode_frames(payload: bytes) -> list[IqFrame]:
    if len(payload) < HEADER_DTYPE.itemsize:
        raise ArchiveFormatError(f"archive shorter than its {HEADER_DTYPE.itemsize}-byte header", 0)
    header = np.frombuffer(payload, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(header["magic"]) != MAGIC:
        raise ArchiveFormatError(f"bad magic {bytes(header['magic'])!r}", 0)
    if int(header["version"]) != VERSION:
        raise ArchiveFormatError(f"unsupported archive version {int(header['version'])}", 4)
    n, count = int(header["n"]), int(header["count"])
    dtype = record_dtype(n)
    expected = HEADER_DTYPE.itemsize + count * dtype.itemsize
    if len(payload) != expected:
        raise ArchiveFormatError(
            f"archive holds {len(payload)} bytes, header promises {expected}",
            min(len(payload), expected),
        )
    records = np.frombuffer(payload, dtype=dtype, count=count, offset=HEADER_DTYPE.itemsize)
    return [
        IqFrame(
            i=record["i"].astype(np.float64),
            q=record["q"].astype(np.float64),
            label=int(record["label"]),
            meta={"seed": int(record["seed"]), "archive_index": idx},
        )
        for idx, record in enumerate(records)
    ]


def record_offset(index: int, n_samples: int) -> int:
    """Byte offset of record ``index`` inside an archive of ``n_samples``-long frames."""
    return HEADER_DTYPE.itemsize + index * record_dtype(n_samples).itemsize


def write_archive(path: Path, frames: Sequence[IqFrame]) -> int:
    payload = encode_frames(frames)
    path.write_bytes(payload)
    logger.info("Wrote %s frames (%s bytes) to %s", len(frames), len(payload), path)
    return len(payload)


def read_archive(path: Path) -> list[IqFrame]:
    frames = decode_frames(path.read_bytes())
    logger.debug("Read %s frames from %s", len(frames), path)
    return frames
