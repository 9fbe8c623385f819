from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core.errors import ShapeError
from .tensor import Tensor

logger = logging.getLogger(__name__)

DEFAULT_MAX_GRAD_NORM = 5.0


@dataclass
class AdamState:
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(
            step=0,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Sequence[Tensor], AdamState]:
    """One bias-corrected Adam update. Tensors with non-finite gradients are left alone."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ShapeError(
            f"adam_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment slots"
        )
    state.step += 1
    correction1 = 1.0 - beta1**state.step
    correction2 = 1.0 - beta2**state.step
    for idx, (param, grad) in enumerate(zip(params, grads)):
        if grad.shape != param.data.shape or state.m[idx].shape != param.data.shape:
            raise ShapeError(f"adam_step: grad {grad.shape} vs param {param.data.shape}")
        if not np.all(np.isfinite(grad)):
            logger.warning(
                "Skipping Adam update for %s at step %s: non-finite gradient",
                param.name or f"param[{idx}]",
                state.step,
            )
            continue
        state.m[idx] = beta1 * state.m[idx] + (1.0 - beta1) * grad
        state.v[idx] = beta2 * state.v[idx] + (1.0 - beta2) * grad * grad
        m_hat = state.m[idx] / correction1
        v_hat = state.v[idx] / correction2
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale finite gradients so their global L2 norm is at most max_norm."""
    finite = [g for g in grads if np.all(np.isfinite(g))]
    total = float(np.sqrt(np.sum([np.sum(g * g) for g in finite]))) if finite else 0.0
    if total <= max_norm or total == 0.0:
        return list(grads), total
    scale = max_norm / total
    return [g * scale if np.all(np.isfinite(g)) else g for g in grads], total


class Adam:
    """Adam over a fixed parameter list with global-norm clipping before each step."""

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        max_grad_norm: float | None = DEFAULT_MAX_GRAD_NORM,
    ) -> None:
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.state = AdamState.for_params(self.params)
        self.last_grad_norm = 0.0

    def zero_grad(self) -> None:
        for param in self.params:
            param.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if self.max_grad_norm is not None:
            grads, self.last_grad_norm = clip_grad_norm(grads, self.max_grad_norm)
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)
