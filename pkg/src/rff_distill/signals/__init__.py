"""Synthetic transmitter fingerprints, Rician channels and impaired I/Q frames."""

from .archive import read_archive, write_archive
from .channel import ChannelConfig, rician_combine, rician_gain
from .fingerprint import (
    DeviceFingerprint,
    FleetRanges,
    SeparationFloors,
    load_fleet,
    sample_fleet,
    save_fleet,
)
from .synthesis import (
    IqFrame,
    WaveformConfig,
    apply_impairments,
    baseband_ideal,
    synthesize_fleet_frames,
    synthesize_frame,
)

__all__ = [
    "ChannelConfig",
    "DeviceFingerprint",
    "FleetRanges",
    "IqFrame",
    "SeparationFloors",
    "WaveformConfig",
    "apply_impairments",
    "baseband_ideal",
    "load_fleet",
    "read_archive",
    "rician_combine",
    "rician_gain",
    "sample_fleet",
    "save_fleet",
    "synthesize_fleet_frames",
    "synthesize_frame",
    "write_archive",
]
