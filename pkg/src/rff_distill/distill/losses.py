from __future__ import annotations

from typing import Any, Literal

import numpy as np

from ..core.errors import ShapeError
from ..numcore import ops
from ..numcore.tensor import Tensor, as_tensor, no_grad

KlDirection = Literal["forward", "reverse"]


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def softened_probs(logits: Any, tau: float) -> Tensor:
    _check_tau(tau)
    return ops.softmax(ops.div(as_tensor(logits), tau), axis=-1)


def softened_log_probs(logits: Any, tau: float) -> Tensor:
    _check_tau(tau)
    return ops.log_softmax(ops.div(as_tensor(logits), tau), axis=-1)


def kl_divergence(teacher_logits: np.ndarray, student_logits: np.ndarray, tau: float) -> float:
    """Batch-mean KL(teacher || student) at temperature tau, without the tau^2 factor."""
    teacher_logits = np.asarray(teacher_logits, dtype=np.float64)
    student_logits = np.asarray(student_logits, dtype=np.float64)
    if teacher_logits.shape != student_logits.shape:
        raise ShapeError(
            f"kl: teacher logits {teacher_logits.shape} vs student {student_logits.shape}"
        )
    with no_grad():
        log_p = softened_log_probs(teacher_logits, tau).data
        log_q = softened_log_probs(student_logits, tau).data
    p = np.exp(log_p)
    per_row = np.sum(p * (log_p - log_q), axis=-1)
    return float(np.mean(per_row))


def kl_loss(
    teacher_logits: Any,
    student_logits: Tensor,
    tau: float,
    scale_by_tau_sq: bool = True,
    direction: KlDirection = "forward",
) -> Tensor:
    """Distillation loss; gradients reach the student logits only."""
    teacher = as_tensor(teacher_logits).detach()
    student = as_tensor(student_logits)
    if teacher.shape != student.shape:
        raise ShapeError(f"kl_loss: teacher logits {teacher.shape} vs student {student.shape}")
    if student.ndim != 2:
        raise ShapeError(f"kl_loss expects (B, L) logits, got {student.shape}")
    _check_tau(tau)
    scaled = ops.div(student, tau)
    with no_grad():
        scaled_teacher = ops.div(teacher, tau)
    if direction == "forward":
        loss = ops.softmax_kl(scaled_teacher, scaled)
    elif direction == "reverse":
        log_q = ops.log_softmax(scaled, axis=-1)
        log_p = ops.log_softmax(scaled_teacher, axis=-1)
        q = ops.exp(log_q)
        loss = ops.mean(ops.sum(ops.mul(q, ops.sub(log_q, log_p)), axis=-1))
    else:
        raise ValueError(f"unknown KL direction {direction!r}")
    if scale_by_tau_sq:
        loss = ops.mul(loss, tau * tau)
    return loss


def total_loss(ce: Any, kl: Any, beta: float) -> Tensor:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return ops.add(ops.mul(as_tensor(ce), 1.0 - beta), ops.mul(as_tensor(kl), beta))
