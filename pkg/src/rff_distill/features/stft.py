from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from ..core.errors import ShapeError
from ..signals.synthesis import IqFrame

logger = logging.getLogger(__name__)

WindowName = Literal["rectangular", "hann"]

_SCIPY_WINDOWS = {"rectangular": "boxcar", "hann": "hann"}


@dataclass(frozen=True)
class StftParams:
    window_len: int = 64
    hop: int = 32
    window_fn: WindowName = "hann"


@dataclass
class Spectrogram:
    """Frequency-by-time feature grid; ``mags`` is (window_len, T)."""

    mags: np.ndarray
    label: int
    params: StftParams
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.mags.shape)  # type: ignore[return-value]


def window_samples(window_fn: str, window_len: int) -> np.ndarray:
    try:
        name = _SCIPY_WINDOWS[window_fn]
    except KeyError as exc:
        raise ValueError(
            f"unknown window function {window_fn!r}; expected one of {sorted(_SCIPY_WINDOWS)}"
        ) from exc
    # periodic (fftbins) Hann, the usual choice for spectral analysis
    return get_window(name, window_len, fftbins=True)


def stft_magnitude(
    samples: np.ndarray, window_len: int, hop: int, window_fn: str = "hann"
) -> np.ndarray:
    """Raw two-sided STFT magnitudes, shape (window_len, T)."""
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim != 1:
        raise ShapeError(f"stft expects a 1-D sample vector, got shape {samples.shape}")
    if window_len < 1 or hop < 1:
        raise ValueError(f"window_len and hop must be >= 1, got {window_len} and {hop}")
    if window_len > samples.shape[0]:
        raise ValueError(
            f"window of {window_len} samples is longer than the {samples.shape[0]}-sample frame"
        )
    window = window_samples(window_fn, window_len)
    segments = sliding_window_view(samples, window_len)[::hop]
    spectrum = np.fft.fft(segments * window, axis=-1)
    return np.abs(spectrum).T


def compress_and_standardize(mags: np.ndarray) -> np.ndarray:
    """log(1+m), then zero mean and unit variance over the whole grid.

    Constant grids become zeros.
    """
    compressed = np.log1p(mags)
    centered = compressed - compressed.mean()
    std = centered.std()
    if std == 0.0 or not np.isfinite(std):
        return np.zeros_like(compressed)
    return centered / std


def stft(
    frame: IqFrame,
    window_len: int = 64,
    hop: int = 32,
    window_fn: WindowName = "hann",
    standardize: bool = True,
) -> Spectrogram:
    mags = stft_magnitude(frame.complex_samples(), window_len, hop, window_fn)
    grid = compress_and_standardize(mags) if standardize else mags
    return Spectrogram(
        mags=grid,
        label=frame.label,
        params=StftParams(window_len, hop, window_fn),
        meta=dict(frame.meta),
    )


def stack_spectrograms(specs: list[Spectrogram]) -> tuple[np.ndarray, np.ndarray]:
    """(B, F, T) features and (B,) integer labels."""
    if not specs:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64)
    features = np.stack([spec.mags for spec in specs])
    labels = np.array([spec.label for spec in specs], dtype=np.int64)
    return features, labels
