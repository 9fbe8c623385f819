from __future__ import annotations

import math

import numpy as np
from pydantic import BaseModel, Field, field_validator


class ChannelConfig(BaseModel):
    """Frequency-flat Rician block fading plus circular Gaussian receiver noise."""

    ricean_k: float = Field(default=10.0, ge=0.0, description="LoS/scatter power ratio, linear")
    noise_var: float = Field(default=0.1, ge=0.0, description="complex noise variance")
    sample_interval: float = Field(default=1e-6, gt=0.0, description="T_s in seconds")
    n_samples: int = Field(default=512, gt=0)
    los_phase: float | None = Field(
        default=None, description="fixed LoS phase in radians; None draws one per frame"
    )
    snr_db: float | None = Field(default=None, description="nominal SNR this config was built from")

    @field_validator("ricean_k")
    @classmethod
    def _k_not_nan(cls, value: float) -> float:
        if math.isnan(value):
            raise ValueError("ricean_k must be a number")
        return value

    @classmethod
    def from_snr_db(cls, snr_db: float, **overrides) -> "ChannelConfig":
        """Noise variance for unit-power signals at the given SNR."""
        return cls(noise_var=10.0 ** (-snr_db / 10.0), snr_db=snr_db, **overrides)

    def nominal_snr_db(self) -> float:
        if self.snr_db is not None:
            return self.snr_db
        if self.noise_var == 0.0:
            return math.inf
        return -10.0 * math.log10(self.noise_var)


def circular_normal(rng: np.random.Generator, size=None, variance: float = 1.0):
    """Complex normal with E|z|^2 = variance, split evenly over both rails."""
    scale = math.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def rician_combine(ricean_k: float, los: complex, scatter: complex) -> complex:
    if ricean_k < 0:
        raise ValueError(f"ricean_k must be nonnegative, got {ricean_k}")
    if math.isinf(ricean_k):
        return complex(los)
    los_weight = math.sqrt(ricean_k / (ricean_k + 1.0))
    scatter_weight = math.sqrt(1.0 / (ricean_k + 1.0))
    return los_weight * los + scatter_weight * scatter


def rician_gain(
    rng: np.random.Generator, ricean_k: float, los_phase: float | None = None
) -> complex:
    """One block-fading draw. The LoS term has unit modulus; its phase is drawn when not fixed."""
    phase = rng.uniform(0.0, 2.0 * math.pi) if los_phase is None else los_phase
    los = complex(math.cos(phase), math.sin(phase))
    scatter = complex(circular_normal(rng))
    return rician_combine(ricean_k, los, scatter)
