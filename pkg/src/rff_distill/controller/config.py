from __future__ import annotations

from typing import Tuple

from pydantic import BaseModel, Field, model_validator


class ControllerConfig(BaseModel):
    """Hyperparameters of the temperature controller."""

    tau_min: float = Field(default=1.0, gt=0.0)
    tau_max: float = Field(default=10.0, gt=0.0)
    window: int = Field(default=5, ge=1)
    gamma: float = Field(default=0.99, gt=0.0, le=1.0)
    gae_lambda: float = Field(default=1.0, ge=0.0, le=1.0)
    clip_kappa: float = Field(default=0.2, gt=0.0, lt=1.0)
    entropy_coef: float = Field(default=0.01, ge=0.0)
    lr: float = Field(default=3e-3, gt=0.0)
    reward_weights: Tuple[float, float, float] = (1.0, -0.5, -0.1)
    rho: float = Field(default=1.0, gt=0.0)
    xi_base: float = 0.8
    k_target: float = 0.1
    a_base: float = 0.9
    reward_clip: Tuple[float, float] = (-1.0, 1.0)
    sigma_clip: Tuple[float, float] = (0.01, 0.1)
    sigma_floor: float = Field(default=1e-6, gt=0.0)
    sigma_max: float = Field(default=0.5, gt=0.0)
    initial_sigma: float = Field(default=0.2, gt=0.0)
    horizon: int = Field(default=8, ge=1)
    minor_epochs: int = Field(default=4, ge=1)
    hidden: int = Field(default=32, ge=1)
    max_grad_norm: float | None = Field(default=5.0, gt=0.0)

    @model_validator(mode="after")
    def _ranges(self) -> "ControllerConfig":
        if not self.tau_min < self.tau_max:
            raise ValueError(f"tau_min ({self.tau_min}) must be below tau_max ({self.tau_max})")
        if self.reward_clip[0] > self.reward_clip[1]:
            raise ValueError(f"reward_clip is empty: {self.reward_clip}")
        low, high = self.sigma_clip
        if not 0.0 < low <= high:
            raise ValueError(f"sigma_clip must satisfy 0 < low <= high, got {self.sigma_clip}")
        if not (self.sigma_floor <= low and high <= self.sigma_max):
            raise ValueError("sigma_clip must lie inside [sigma_floor, sigma_max]")
        if not self.sigma_floor <= self.initial_sigma <= self.sigma_max:
            raise ValueError("initial_sigma must lie inside [sigma_floor, sigma_max]")
        return self
