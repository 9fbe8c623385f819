from __future__ import annotations

from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

STATE_DIM = 7


@dataclass(frozen=True)
class ControllerState:
    acc_mean: float
    acc_std: float
    acc_slope: float
    kl_mean: float
    kl_std: float
    kl_slope: float
    progress: float

    def as_array(self) -> np.ndarray:
        return np.asarray(astuple(self), dtype=np.float64)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))

    def named(self, prefix: str = "s_") -> dict[str, float]:
        return {f"{prefix}{item.name}": float(getattr(self, item.name)) for item in fields(self)}


def least_squares_slope(values: Sequence[float]) -> float:
    """Slope of the best-fit line through (0, v0), (1, v1), ..."""
    y = np.asarray(values, dtype=np.float64)
    if y.size < 2:
        return 0.0
    x = np.arange(y.size, dtype=np.float64)
    x_centered = x - x.mean()
    return float(np.dot(x_centered, y - y.mean()) / np.dot(x_centered, x_centered))


def window_stats(history: Sequence[float], k: int) -> tuple[float, float, float]:
    if len(history) == 0:
        raise ValueError("telemetry history is empty")
    recent = np.asarray(history[-k:], dtype=np.float64)
    return float(recent.mean()), float(recent.std()), least_squares_slope(recent)


def state_features(
    acc_history: Sequence[float],
    kl_history: Sequence[float],
    epoch: int,
    total_epochs: int,
    k: int,
) -> ControllerState:
    if total_epochs <= 0:
        raise ValueError(f"total_epochs must be positive, got {total_epochs}")
    if k < 1:
        raise ValueError(f"window must be >= 1, got {k}")
    acc = window_stats(list(acc_history), k)
    kl = window_stats(list(kl_history), k)
    progress = min(max(epoch / total_epochs, 0.0), 1.0)
    return ControllerState(*acc, *kl, progress)
