from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..signals.channel import circular_normal
from ..signals.synthesis import IqFrame

logger = logging.getLogger(__name__)


class AugmentPolicy(BaseModel):
    """Switchable training-set augmentations. Every field left as None is off."""

    noise_snr_db: Tuple[float, float] | None = None
    max_shift: int | None = Field(default=None, ge=0)
    gain_range: Tuple[float, float] | None = None

    @model_validator(mode="after")
    def _ordered_ranges(self) -> "AugmentPolicy":
        for name in ("noise_snr_db", "gain_range"):
            bounds = getattr(self, name)
            if bounds is not None and bounds[0] > bounds[1]:
                raise ValueError(f"{name} lower bound exceeds upper bound: {bounds}")
        if self.gain_range is not None and self.gain_range[0] <= 0:
            raise ValueError("gain_range must be positive")
        return self

    @property
    def is_empty(self) -> bool:
        return self.noise_snr_db is None and not self.max_shift and self.gain_range is None


def shift_frame(frame: IqFrame, shift: int) -> IqFrame:
    meta = {**frame.meta, "aug_shift": int(shift)}
    return IqFrame(
        i=np.roll(frame.i, shift), q=np.roll(frame.q, shift), label=frame.label, meta=meta
    )


def scale_frame(frame: IqFrame, gain: float) -> IqFrame:
    meta = {**frame.meta, "aug_gain": float(gain)}
    return IqFrame(i=frame.i * gain, q=frame.q * gain, label=frame.label, meta=meta)


def add_noise(frame: IqFrame, rng: np.random.Generator, snr_db: float) -> IqFrame:
    """Additive circular noise at ``snr_db`` relative to the frame's measured power."""
    samples = frame.complex_samples()
    power = float(np.mean(np.abs(samples) ** 2))
    meta = {**frame.meta, "aug_snr_db": float(snr_db)}
    if power == 0.0:
        return IqFrame(i=frame.i.copy(), q=frame.q.copy(), label=frame.label, meta=meta)
    noise_var = power * 10.0 ** (-snr_db / 10.0)
    noisy = samples + circular_normal(rng, samples.shape[0], noise_var)
    return IqFrame.from_complex(noisy, frame.label, meta)


def augment(frame: IqFrame, rng: np.random.Generator, policy: AugmentPolicy) -> IqFrame:
    """Apply shift, then gain, then noise; each applied step is recorded in ``meta``."""
    out = frame
    if policy.max_shift:
        out = shift_frame(out, int(rng.integers(-policy.max_shift, policy.max_shift + 1)))
    if policy.gain_range is not None:
        low, high = policy.gain_range
        # log-uniform so 0.5x and 2x are equally likely
        out = scale_frame(out, math.exp(rng.uniform(math.log(low), math.log(high))))
    if policy.noise_snr_db is not None:
        out = add_noise(out, rng, float(rng.uniform(*policy.noise_snr_db)))
    if out is frame:
        return IqFrame(i=frame.i.copy(), q=frame.q.copy(), label=frame.label, meta=dict(frame.meta))
    logger.debug(
        "Augmented frame label=%s with %s",
        frame.label,
        {key: value for key, value in out.meta.items() if key.startswith("aug_")},
    )
    return out
