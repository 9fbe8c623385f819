"""Impaired baseband synthesis.

A frame is built as ``s[n] = H * b[n] + noise[n]`` where ``b`` is the ideal QPSK
baseband passed through the device's I/Q impairment map and ``H`` is one Rician
draw per frame. Everything is a pure function of the fingerprint, the channel and
an integer seed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Literal, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .channel import ChannelConfig, circular_normal, rician_gain
from .fingerprint import DeviceFingerprint

logger = logging.getLogger(__name__)

RAIL_AMPLITUDE = 1.0 / math.sqrt(2.0)


class WaveformConfig(BaseModel):
    modulation: Literal["qpsk", "zero"] = "qpsk"
    oversampling: int = Field(default=4, ge=1)


@dataclass
class IqFrame:
    i: np.ndarray
    q: np.ndarray
    label: int
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.i = np.asarray(self.i, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.i.ndim != 1 or self.i.shape != self.q.shape:
            raise ValueError(
                f"I/Q rails must be equal-length vectors, got {self.i.shape} and {self.q.shape}"
            )
        if not (np.all(np.isfinite(self.i)) and np.all(np.isfinite(self.q))):
            raise ValueError("I/Q samples must be finite")

    @property
    def n_samples(self) -> int:
        return int(self.i.shape[0])

    def complex_samples(self) -> np.ndarray:
        return self.i + 1j * self.q

    @classmethod
    def from_complex(
        cls, samples: np.ndarray, label: int, meta: dict[str, Any] | None = None
    ) -> "IqFrame":
        samples = np.asarray(samples, dtype=np.complex128)
        return cls(i=samples.real.copy(), q=samples.imag.copy(), label=label, meta=dict(meta or {}))


def baseband_ideal(
    rng: np.random.Generator, waveform: WaveformConfig, n_samples: int
) -> tuple[np.ndarray, np.ndarray]:
    """Rectangular-pulse QPSK rails at the configured oversampling factor."""
    if waveform.modulation == "zero":
        return np.zeros(n_samples), np.zeros(n_samples)
    n_symbols = -(-n_samples // waveform.oversampling)
    bits = rng.integers(0, 2, size=(2, n_symbols))
    symbols = RAIL_AMPLITUDE * (1.0 - 2.0 * bits)
    rails = np.repeat(symbols, waveform.oversampling, axis=1)[:, :n_samples]
    return rails[0].copy(), rails[1].copy()


def impair(
    b_i: np.ndarray, b_q: np.ndarray, alpha: float, phi: float, f0: float, t: np.ndarray
) -> np.ndarray:
    """b[n] = alpha*cos(2*pi*f0*t + phi)*b_I[n] - j*sin(2*pi*f0*t)*b_Q[n], as written."""
    b_i, b_q, t = np.asarray(b_i, float), np.asarray(b_q, float), np.asarray(t, float)
    if not (b_i.shape == b_q.shape == t.shape):
        raise ValueError(f"rails and time axis differ: {b_i.shape}, {b_q.shape}, {t.shape}")
    carrier = 2.0 * math.pi * f0 * t
    return alpha * np.cos(carrier + phi) * b_i - 1j * np.sin(carrier) * b_q


def apply_impairments(
    b_i: np.ndarray, b_q: np.ndarray, fp: DeviceFingerprint, t: np.ndarray
) -> np.ndarray:
    if not isinstance(fp, DeviceFingerprint):
        fp = DeviceFingerprint.model_validate(fp)
    return impair(b_i, b_q, fp.alpha, fp.phi, fp.f0, t)


def frame_seed(base_seed: int, device_id: int, frame_index: int) -> int:
    """Stable per-frame seed so frames can be synthesized in any order."""
    sequence = np.random.SeedSequence([base_seed, device_id, frame_index])
    state = sequence.generate_state(1, dtype=np.uint64)
    return int(state[0])


def synthesize_frame(
    fp: DeviceFingerprint,
    channel: ChannelConfig,
    seed: int,
    waveform: WaveformConfig | None = None,
    condition: int = 0,
) -> IqFrame:
    waveform = waveform or WaveformConfig()
    rng = np.random.default_rng(seed)
    n = channel.n_samples
    t = np.arange(n) * channel.sample_interval
    b_i, b_q = baseband_ideal(rng, waveform, n)
    baseband = apply_impairments(b_i, b_q, fp, t)
    gain = rician_gain(rng, channel.ricean_k, channel.los_phase)
    received = gain * baseband
    if channel.noise_var > 0.0:
        received = received + circular_normal(rng, n, channel.noise_var)
    meta = {
        "seed": int(seed),
        "snr_db": channel.nominal_snr_db(),
        "channel_gain": [gain.real, gain.imag],
        "condition": condition,
    }
    return IqFrame.from_complex(received, label=fp.device_id, meta=meta)


def iter_fleet_frames(
    fleet: Sequence[DeviceFingerprint],
    channels: ChannelConfig | Sequence[ChannelConfig],
    per_device: int,
    base_seed: int,
    waveform: WaveformConfig | None = None,
) -> Iterator[IqFrame]:
    """Frames device-major; each device cycles through the channel profiles in order."""
    profiles = [channels] if isinstance(channels, ChannelConfig) else list(channels)
    if not profiles:
        raise ValueError("at least one channel profile is required")
    lengths = {profile.n_samples for profile in profiles}
    if len(lengths) != 1:
        raise ValueError(f"channel profiles disagree on frame length: {sorted(lengths)}")
    for fp in fleet:
        for idx in range(per_device):
            condition = idx % len(profiles)
            seed = frame_seed(base_seed, fp.device_id, idx)
            yield synthesize_frame(fp, profiles[condition], seed, waveform, condition=condition)


def synthesize_fleet_frames(
    fleet: Sequence[DeviceFingerprint],
    channels: ChannelConfig | Sequence[ChannelConfig],
    per_device: int,
    base_seed: int,
    waveform: WaveformConfig | None = None,
) -> list[IqFrame]:
    frames = list(iter_fleet_frames(fleet, channels, per_device, base_seed, waveform))
    logger.info("Synthesized %s frames for %s devices", len(frames), len(fleet))
    return frames
