"""STFT featurization, augmentation, dataset assembly and capture ingestion."""

from .augment import AugmentPolicy, augment
from .dataset import (
    DatasetArrays,
    DatasetSplit,
    FeaturizerConfig,
    build_dataset,
    dataset_from_frames,
    load_dataset,
    save_dataset,
    stratified_split,
)
from .ingest import IngestLayout, ingest_iq
from .stft import Spectrogram, StftParams, stft, stft_magnitude

__all__ = [
    "AugmentPolicy",
    "DatasetArrays",
    "DatasetSplit",
    "FeaturizerConfig",
    "IngestLayout",
    "Spectrogram",
    "StftParams",
    "augment",
    "build_dataset",
    "dataset_from_frames",
    "ingest_iq",
    "load_dataset",
    "save_dataset",
    "stft",
    "stft_magnitude",
    "stratified_split",
]
