from __future__ import annotations

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..core.errors import ShapeError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor
from .layers import BiLSTMLayer, EncoderBlock, LayerNorm, Linear, Module


class TeacherConfig(BaseModel):
    lstm_layers: int = Field(default=2, ge=1)
    lstm_hidden: int = Field(default=32, ge=1)
    attn_layers: int = Field(default=3, ge=1)
    attn_heads: int = Field(default=2, ge=1)
    model_dim: int = Field(default=64, ge=2)
    ff_expansion: int = Field(default=2, ge=1)
    num_classes: int = Field(default=20, ge=2)
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    reg_lambda: float = Field(default=1e-4, ge=0.0)

    @model_validator(mode="after")
    def _bidirectional_width(self) -> "TeacherConfig":
        if self.model_dim != 2 * self.lstm_hidden:
            raise ValueError(
                f"model_dim ({self.model_dim}) must equal 2 * lstm_hidden ({2 * self.lstm_hidden})"
            )
        if self.model_dim % self.attn_heads:
            raise ValueError(
                f"model_dim {self.model_dim} is not divisible by attn_heads {self.attn_heads}"
            )
        return self


class TeacherNet(Module):
    """Stacked BiLSTM embedding, pre-norm attention encoder, temporal mean pool, dense head."""

    def __init__(self, cfg: TeacherConfig, n_features: int, rng: np.random.Generator) -> None:
        self.cfg = cfg
        self.n_features = n_features
        widths = [n_features] + [cfg.model_dim] * (cfg.lstm_layers - 1)
        self.recurrent = [BiLSTMLayer(width, cfg.lstm_hidden, rng) for width in widths]
        self.encoder = [
            EncoderBlock(cfg.model_dim, cfg.attn_heads, cfg.ff_expansion, cfg.dropout_rate, rng)
            for _ in range(cfg.attn_layers)
        ]
        self.final_norm = LayerNorm(cfg.model_dim)
        self.hidden = Linear(cfg.model_dim, cfg.model_dim, rng)
        self.classifier = Linear(cfg.model_dim, cfg.num_classes, rng)

    def encode(self, x: Tensor | np.ndarray, rng: np.random.Generator | None = None) -> Tensor:
        """(B, F, T) spectrogram batch -> (B, T, D) encoded sequence."""
        x = as_tensor(x)
        if x.ndim != 3 or x.shape[1] != self.n_features:
            raise ShapeError(f"teacher expects (B, {self.n_features}, T), got {x.shape}")
        seq = ops.transpose(x, (0, 2, 1))
        for layer in self.recurrent:
            seq = layer(seq)
        for block in self.encoder:
            seq = block(seq, rng)
        return self.final_norm(seq)

    def pool_and_classify(
        self, seq: Tensor, rng: np.random.Generator | None = None
    ) -> tuple[Tensor, Tensor]:
        """Mean over time, then the head. Returns (penultimate features, logits)."""
        pooled = ops.mean(seq, axis=1)
        hidden = ops.dropout(
            ops.relu(self.hidden(pooled)), self.cfg.dropout_rate, rng, self.training
        )
        return hidden, self.classifier(hidden)

    def __call__(self, x: Tensor | np.ndarray, rng: np.random.Generator | None = None) -> Tensor:
        return self.pool_and_classify(self.encode(x, rng), rng)[1]

    def features(self, x: Tensor | np.ndarray) -> Tensor:
        return self.pool_and_classify(self.encode(x))[0]

    def head_weights(self) -> list[Tensor]:
        return [self.hidden.weight, self.classifier.weight]
