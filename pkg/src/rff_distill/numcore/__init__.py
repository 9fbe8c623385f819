"""Minimal float64 tensor engine with reverse-mode differentiation."""

from .gradcheck import finite_difference_check, parameter_check
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .tensor import GradTape, Tensor, as_tensor, backward, grad_enabled, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "GradTape",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "clip_grad_norm",
    "finite_difference_check",
    "grad_enabled",
    "no_grad",
    "parameter_check",
]
