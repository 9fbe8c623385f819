from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from ..networks.factory import Classifier
from .trainer import predict_logits

logger = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    accuracy: float
    confusion: np.ndarray
    counts: np.ndarray
    per_class_recall: np.ndarray
    predictions: np.ndarray

    def weakest_classes(self, n: int = 3) -> list[int]:
        return [int(idx) for idx in np.argsort(self.per_class_recall, kind="stable")[:n]]

    def write_confusion_csv(self, path: Path) -> None:
        labels = [str(idx) for idx in range(self.confusion.shape[0])]
        frame = pd.DataFrame(self.confusion, index=labels, columns=labels)
        frame.index.name = "true_label"
        frame.to_csv(path, float_format="%.17g")


def evaluate_predictions(
    labels: np.ndarray, predictions: np.ndarray, num_classes: int
) -> EvaluationResult:
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.size == 0:
        raise ValueError("cannot evaluate an empty split")
    counts = confusion_matrix(labels, predictions, labels=list(range(num_classes)))
    support = counts.sum(axis=1, keepdims=True)
    # classes absent from the split keep an all-zero row
    confusion = np.divide(
        counts, support, out=np.zeros(counts.shape, dtype=np.float64), where=support > 0
    )
    return EvaluationResult(
        accuracy=float(np.trace(counts)) / float(counts.sum()),
        confusion=confusion,
        counts=counts,
        per_class_recall=np.diag(confusion).copy(),
        predictions=predictions,
    )


def evaluate(
    model: Classifier, x: np.ndarray, y: np.ndarray, num_classes: int | None = None
) -> EvaluationResult:
    num_classes = num_classes or model.cfg.num_classes
    predictions = np.argmax(predict_logits(model, x), axis=-1)
    result = evaluate_predictions(y, predictions, num_classes)
    logger.debug("Evaluated %s samples: accuracy %.4f", len(y), result.accuracy)
    return result
