from __future__ import annotations

from typing import List, Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..core.errors import ShapeError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor
from .layers import Conv2d, Linear, Module


class StudentConfig(BaseModel):
    widths: List[int] = Field(default_factory=lambda: [8, 16, 32])
    strides: List[int] = Field(default_factory=lambda: [2, 2, 2])
    kernel: int = Field(default=3, ge=1)
    classifier_width: int | None = Field(
        default=None, ge=1, description="optional hidden layer before the head"
    )
    pool: Literal["none", "max", "avg"] = "none"
    num_classes: int = Field(default=20, ge=2)

    @model_validator(mode="after")
    def _stage_shapes(self) -> "StudentConfig":
        if not self.widths:
            raise ValueError("student needs at least one conv stage")
        if len(self.widths) != len(self.strides):
            raise ValueError(f"{len(self.widths)} widths but {len(self.strides)} strides")
        if any(width < 1 for width in self.widths) or any(stride < 1 for stride in self.strides):
            raise ValueError("widths and strides must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("same-padded kernels must be odd")
        return self


class StudentNet(Module):
    """Strided conv stages with ReLU, global average pool, linear head."""

    def __init__(self, cfg: StudentConfig, rng: np.random.Generator) -> None:
        self.cfg = cfg
        channels = [1] + list(cfg.widths)
        self.stages = [
            Conv2d(channels[idx], channels[idx + 1], cfg.kernel, stride, rng)
            for idx, stride in enumerate(cfg.strides)
        ]
        width = cfg.widths[-1]
        self.hidden = Linear(width, cfg.classifier_width, rng) if cfg.classifier_width else None
        self.classifier = Linear(cfg.classifier_width or width, cfg.num_classes, rng)

    def features(self, x: Tensor | np.ndarray) -> Tensor:
        """(B, F, T) batch -> (B, C) pooled penultimate activations."""
        x = as_tensor(x)
        if x.ndim != 3:
            raise ShapeError(f"student expects (B, F, T), got {x.shape}")
        out = ops.reshape(x, (x.shape[0], 1) + x.shape[1:])
        last = len(self.stages) - 1
        for idx, stage in enumerate(self.stages):
            out = ops.relu(stage(out))
            if self.cfg.pool != "none" and idx < last:
                out = ops.max_pool2d(out) if self.cfg.pool == "max" else ops.avg_pool2d(out)
        pooled = ops.mean(out, axis=(2, 3))
        if self.hidden is not None:
            pooled = ops.relu(self.hidden(pooled))
        return pooled

    def __call__(self, x: Tensor | np.ndarray, rng: np.random.Generator | None = None) -> Tensor:
        return self.classifier(self.features(x))

    def head_weights(self) -> list[Tensor]:
        heads = [self.classifier.weight]
        if self.hidden is not None:
            heads.insert(0, self.hidden.weight)
        return heads
