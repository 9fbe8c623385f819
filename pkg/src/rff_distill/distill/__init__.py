"""Losses and training loops for supervised and distilled classifiers."""

from .evaluation import EvaluationResult, evaluate, evaluate_predictions
from .losses import kl_divergence, kl_loss, softened_probs, total_loss
from .trace import DistillTrace, EpochRecord
from .trainer import (
    DistillConfig,
    EpochMetrics,
    TrainConfig,
    TrainingSession,
    distill_epoch,
    distill_fixed,
    predict_logits,
    train_supervised,
)

__all__ = [
    "DistillConfig",
    "DistillTrace",
    "EpochMetrics",
    "EpochRecord",
    "EvaluationResult",
    "TrainConfig",
    "TrainingSession",
    "distill_epoch",
    "distill_fixed",
    "evaluate",
    "evaluate_predictions",
    "kl_divergence",
    "kl_loss",
    "predict_logits",
    "softened_probs",
    "total_loss",
    "train_supervised",
]
