"""Supervised and distillation training loops.

Both loops share :class:`TrainingSession`, which owns the optimizer and the seeded
streams for batch order and dropout. A distillation epoch at ``beta=0`` builds the
same loss graph as a supervised epoch, so the two produce bit-identical updates.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..core.errors import NonFiniteLossError
from ..features.dataset import DatasetArrays
from ..networks.factory import Classifier, frobenius_reg
from ..networks.teacher import TeacherNet
from ..numcore import ops
from ..numcore.optim import Adam
from ..numcore.tensor import backward, no_grad
from .losses import KlDirection, kl_divergence, kl_loss, total_loss
from .trace import DistillTrace, EpochRecord

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=2e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    max_grad_norm: float | None = Field(default=5.0, gt=0.0)


class DistillConfig(TrainConfig):
    beta: float = Field(default=0.5, ge=0.0, le=1.0)
    tau: float = Field(default=4.0, gt=0.0)
    tau_min: float = Field(default=0.05, gt=0.0)
    kd_mode: Literal["none", "fixed", "dynamic"] = "fixed"
    scale_by_tau_sq: bool = True
    kl_direction: KlDirection = "forward"

    @model_validator(mode="after")
    def _tau_floor(self) -> "DistillConfig":
        if self.tau < self.tau_min:
            raise ValueError(f"tau {self.tau} is below tau_min {self.tau_min}")
        return self


@dataclass
class EpochMetrics:
    epoch: int
    tau: float
    beta: float
    batch_accuracies: list[float] = field(default_factory=list)
    train_acc: float = 0.0
    ce_mean: float = 0.0
    kl_mean: float = 0.0
    loss_mean: float = 0.0
    val_acc: float = 0.0
    wall_time: float = 0.0

    def is_finite(self) -> bool:
        values = (self.train_acc, self.ce_mean, self.kl_mean, self.val_acc)
        return all(math.isfinite(value) for value in values)

    def to_record(
        self, reward: float | None = None, controller: dict[str, float] | None = None
    ) -> EpochRecord:
        return EpochRecord(
            epoch=self.epoch,
            tau=self.tau,
            train_acc=self.train_acc,
            val_acc=self.val_acc,
            ce=self.ce_mean,
            kl=self.kl_mean,
            reward=reward,
            wall_time=self.wall_time,
            controller=dict(controller or {}),
        )


def predict_logits(model: Classifier, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits; the model's train/eval flag is restored afterwards."""
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            chunks = [
                model(x[start : start + batch_size]).data
                for start in range(0, len(x), batch_size)
            ]
    finally:
        model.train(was_training)
    if not chunks:
        return np.zeros((0, model.cfg.num_classes))
    return np.concatenate(chunks, axis=0)


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if len(labels) == 0:
        return 0.0
    return float(np.mean(np.argmax(logits, axis=-1) == labels))


class TrainingSession:
    """One model, one optimizer, one seeded data order, driven an epoch at a time."""

    def __init__(
        self,
        model: Classifier,
        data: DatasetArrays,
        cfg: TrainConfig,
        seed: int,
        teacher: Classifier | None = None,
        reg_lambda: float = 0.0,
        scale_by_tau_sq: bool = True,
        kl_direction: KlDirection = "forward",
    ) -> None:
        if len(data.y_train) == 0 or len(data.y_val) == 0:
            raise ValueError("training needs nonempty train and validation splits")
        self.model = model
        self.data = data
        self.cfg = cfg
        self.reg_lambda = reg_lambda
        self.scale_by_tau_sq = scale_by_tau_sq
        self.kl_direction = kl_direction
        order_seq, dropout_seq = np.random.SeedSequence(seed).spawn(2)
        self.order_rng = np.random.default_rng(order_seq)
        self.dropout_rng = np.random.default_rng(dropout_seq)
        self.params = model.parameters()
        self.optimizer = Adam(
            self.params,
            lr=cfg.lr,
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.eps,
            max_grad_norm=cfg.max_grad_norm,
        )
        # teacher is frozen: its logits are computed once, in eval mode
        self.teacher_logits = predict_logits(teacher, data.x_train) if teacher is not None else None
        self.epoch = 0

    def run_epoch(self, tau: float = 1.0, beta: float = 0.0) -> EpochMetrics:
        if beta > 0.0 and self.teacher_logits is None:
            raise ValueError("distillation with beta > 0 needs a teacher")
        started = time.perf_counter()
        self.epoch += 1
        x, y = self.data.x_train, self.data.y_train
        order = self.order_rng.permutation(len(y))
        last_good = self.model.state_dict()
        metrics = EpochMetrics(epoch=self.epoch, tau=float(tau), beta=float(beta))
        ce_values: list[float] = []
        kl_values: list[float] = []
        loss_values: list[float] = []
        self.model.train()
        for start in range(0, len(order), self.cfg.batch_size):
            batch = order[start : start + self.cfg.batch_size]
            logits = self.model(x[batch], rng=self.dropout_rng)
            ce = ops.cross_entropy(logits, y[batch])
            if beta == 0.0:
                loss = ce
            else:
                kl = kl_loss(
                    self.teacher_logits[batch],  # type: ignore[index]
                    logits,
                    tau,
                    scale_by_tau_sq=self.scale_by_tau_sq,
                    direction=self.kl_direction,
                )
                loss = total_loss(ce, kl, beta)
            if self.reg_lambda > 0.0:
                loss = ops.add(loss, frobenius_reg(self.model.head_weights(), self.reg_lambda))
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                self.model.load_state_dict(last_good)
                raise NonFiniteLossError(
                    f"non-finite loss {loss_value} at epoch {self.epoch}, batch starting {start}",
                    last_good=last_good,
                    epoch=self.epoch,
                )
            backward(loss, self.params)
            self.optimizer.step()
            metrics.batch_accuracies.append(accuracy(logits.data, y[batch]))
            ce_values.append(ce.item())
            loss_values.append(loss_value)
            if self.teacher_logits is not None:
                kl_values.append(kl_divergence(self.teacher_logits[batch], logits.data, tau))
        metrics.train_acc = float(np.mean(metrics.batch_accuracies))
        metrics.ce_mean = float(np.mean(ce_values))
        metrics.kl_mean = float(np.mean(kl_values)) if kl_values else 0.0
        metrics.loss_mean = float(np.mean(loss_values))
        metrics.val_acc = accuracy(predict_logits(self.model, self.data.x_val), self.data.y_val)
        metrics.wall_time = time.perf_counter() - started
        logger.info(
            "epoch %s tau=%.3f beta=%.2f train_acc=%.4f val_acc=%.4f ce=%.4f kl=%.4f",
            metrics.epoch,
            metrics.tau,
            metrics.beta,
            metrics.train_acc,
            metrics.val_acc,
            metrics.ce_mean,
            metrics.kl_mean,
        )
        return metrics


def train_supervised(
    model: Classifier, data: DatasetArrays, cfg: TrainConfig, seed: int, mode: str = "nkd"
) -> tuple[Classifier, DistillTrace]:
    """Cross-entropy training; teachers also carry the head regularizer."""
    reg_lambda = model.cfg.reg_lambda if isinstance(model, TeacherNet) else 0.0
    session = TrainingSession(model, data, cfg, seed, reg_lambda=reg_lambda)
    trace = DistillTrace(mode=mode)
    for _ in range(cfg.epochs):
        trace.append(session.run_epoch().to_record())
    model.eval()
    return model, trace


def distill_epoch(session: TrainingSession, tau: float, beta: float) -> EpochMetrics:
    return session.run_epoch(tau=tau, beta=beta)


def distill_fixed(
    student: Classifier,
    teacher: Classifier,
    data: DatasetArrays,
    cfg: DistillConfig,
    seed: int,
    mode: str | None = None,
) -> tuple[Classifier, DistillTrace]:
    session = TrainingSession(
        student,
        data,
        cfg,
        seed,
        teacher=teacher,
        scale_by_tau_sq=cfg.scale_by_tau_sq,
        kl_direction=cfg.kl_direction,
    )
    trace = DistillTrace(mode=mode or f"fixed_tau_{cfg.tau:g}")
    for _ in range(cfg.epochs):
        trace.append(distill_epoch(session, cfg.tau, cfg.beta).to_record())
    student.eval()
    return student, trace
