"""Labeled spectrogram datasets with stratified 6:2:2 splits."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from pydantic import BaseModel, Field

from ..core.errors import ConfigError, MissingArtifactError
from ..core.npz import write_npz
from ..signals.archive import record_offset
from ..signals.channel import ChannelConfig
from ..signals.fingerprint import DeviceFingerprint
from ..signals.synthesis import IqFrame, WaveformConfig, synthesize_fleet_frames
from .augment import AugmentPolicy, augment
from .stft import Spectrogram, stack_spectrograms, stft

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_RATIOS = (0.6, 0.2, 0.2)
MIN_PER_SPLIT = 5
MIN_PER_DEVICE = 10
_AUGMENT_STREAM = 0xA7


class FeaturizerConfig(BaseModel):
    window_len: int = Field(default=64, ge=1)
    hop: int = Field(default=32, ge=1)
    window_fn: str = Field(default="hann", pattern="^(rectangular|hann)$")


@dataclass
class DatasetArrays:
    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    split_seed: int = 0
    indices: dict[str, np.ndarray] = field(default_factory=dict)

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, f"x_{name}"), getattr(self, f"y_{name}")

    @property
    def feature_shape(self) -> tuple[int, int]:
        return tuple(self.x_train.shape[1:])  # type: ignore[return-value]


@dataclass
class DatasetSplit:
    train: list[Spectrogram]
    val: list[Spectrogram]
    test: list[Spectrogram]
    split_seed: int
    indices: dict[str, np.ndarray]
    num_classes: int

    def sizes(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name in SPLITS}

    def as_arrays(self) -> DatasetArrays:
        arrays = {}
        for name in SPLITS:
            x, y = stack_spectrograms(getattr(self, name))
            arrays[f"x_{name}"], arrays[f"y_{name}"] = x, y
        return DatasetArrays(
            **arrays,
            num_classes=self.num_classes,
            split_seed=self.split_seed,
            indices={name: np.asarray(idx) for name, idx in self.indices.items()},
        )


def stratified_split(labels: Sequence[int], split_seed: int) -> dict[str, np.ndarray]:
    """Per-label shuffle then round(0.6n) / round(0.2n) / remainder."""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(split_seed)
    parts: dict[str, list[np.ndarray]] = {name: [] for name in SPLITS}
    for label in np.unique(labels):
        members = rng.permutation(np.flatnonzero(labels == label))
        n_train = int(round(SPLIT_RATIOS[0] * members.size))
        n_val = int(round(SPLIT_RATIOS[1] * members.size))
        chunks = (members[:n_train], members[n_train : n_train + n_val], members[n_train + n_val :])
        for name, chunk in zip(SPLITS, chunks):
            if chunk.size < MIN_PER_SPLIT:
                raise ConfigError(
                    f"device {int(label)} gets {chunk.size} {name} samples from {members.size}; "
                    f"every split needs at least {MIN_PER_SPLIT}",
                    field_path="dataset.per_device",
                )
            parts[name].append(chunk)
    return {name: np.sort(np.concatenate(chunks)) for name, chunks in parts.items()}


def _augment_rng(split_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([split_seed, _AUGMENT_STREAM, int(index)]))


def dataset_from_frames(
    frames: Sequence[IqFrame],
    split_seed: int,
    featurizer: FeaturizerConfig | None = None,
    policy: AugmentPolicy | None = None,
    workers: int = 1,
    num_classes: int | None = None,
) -> DatasetSplit:
    featurizer = featurizer or FeaturizerConfig()
    policy = policy or AugmentPolicy()
    labels = [frame.label for frame in frames]
    indices = stratified_split(labels, split_seed)

    def _featurize(index: int, train: bool) -> Spectrogram:
        frame = frames[index]
        if train and not policy.is_empty:
            frame = augment(frame, _augment_rng(split_seed, index), policy)
        spec = stft(frame, featurizer.window_len, featurizer.hop, featurizer.window_fn)
        spec.meta["archive_index"] = int(index)
        return spec

    splits: dict[str, list[Spectrogram]] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for name in SPLITS:
            train = name == "train"
            # map() yields in submission order, so worker scheduling never reorders samples
            splits[name] = list(
                pool.map(lambda idx, train=train: _featurize(int(idx), train), indices[name])
            )
    split = DatasetSplit(
        **splits,
        split_seed=split_seed,
        indices=indices,
        num_classes=num_classes if num_classes is not None else int(max(labels)) + 1,
    )
    logger.info("Built dataset split %s (seed %s)", split.sizes(), split_seed)
    return split


def build_dataset(
    fleet: Sequence[DeviceFingerprint],
    channels: ChannelConfig | Sequence[ChannelConfig],
    per_device: int,
    seed: int,
    featurizer: FeaturizerConfig | None = None,
    policy: AugmentPolicy | None = None,
    waveform: WaveformConfig | None = None,
    workers: int = 1,
) -> DatasetSplit:
    if per_device < MIN_PER_DEVICE:
        raise ConfigError(
            f"per_device must be at least {MIN_PER_DEVICE}, got {per_device}",
            field_path="dataset.per_device",
        )
    frames = synthesize_fleet_frames(fleet, channels, per_device, seed, waveform)
    return dataset_from_frames(frames, seed, featurizer, policy, workers, num_classes=len(fleet))


def save_dataset(path: Path, arrays: DatasetArrays) -> None:
    payload = {
        f"{kind}_{name}": getattr(arrays, f"{kind}_{name}")
        for name in SPLITS
        for kind in ("x", "y")
    }
    for name in SPLITS:
        payload[f"idx_{name}"] = arrays.indices.get(name, np.zeros(0, np.int64))
    payload["num_classes"] = np.int64(arrays.num_classes)
    payload["split_seed"] = np.uint64(arrays.split_seed)
    write_npz(path, payload, compress=True)


def load_dataset(path: Path) -> DatasetArrays:
    if not path.exists():
        raise MissingArtifactError(f"dataset {path} not found; run `rff-distill featurize` first")
    with np.load(path) as data:
        return DatasetArrays(
            x_train=data["x_train"],
            y_train=data["y_train"],
            x_val=data["x_val"],
            y_val=data["y_val"],
            x_test=data["x_test"],
            y_test=data["y_test"],
            num_classes=int(data["num_classes"]),
            split_seed=int(data["split_seed"]),
            indices={name: data[f"idx_{name}"] for name in SPLITS},
        )


def manifest_entries(
    indices: dict[str, np.ndarray], labels: Sequence[int], archive_file: str, n_samples: int
) -> list[dict]:
    entries = []
    for name in SPLITS:
        for index in indices[name]:
            entries.append(
                {
                    "split": name,
                    "file": archive_file,
                    "offset": record_offset(int(index), n_samples),
                    "label": int(labels[int(index)]),
                }
            )
    return entries


def write_manifest(path: Path, entries: list[dict]) -> None:
    path.write_text(json.dumps(entries, indent=1) + "\n", encoding="utf-8")
