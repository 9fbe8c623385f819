from __future__ import annotations

import logging
import resource
import sys
import time
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import silhouette_score

from ..networks.factory import Classifier
from ..numcore.tensor import no_grad

logger = logging.getLogger(__name__)


@dataclass
class PcaProjection:
    coords: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def pca_project(features: np.ndarray, dims: int = 2) -> PcaProjection:
    """Project onto the top principal axes of the covariance.

    Each component is signed so that its largest-magnitude entry is positive.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be (B, D), got {features.shape}")
    samples, width = features.shape
    if samples <= dims:
        raise ValueError(f"need more samples ({samples}) than projection dims ({dims})")
    if dims > width:
        raise ValueError(f"cannot project {width}-dim features onto {dims} components")
    mean = features.mean(axis=0)
    centered = features - mean
    covariance = centered.T @ centered / (samples - 1)
    total = float(np.trace(covariance))
    if total <= 0.0:
        raise ValueError("features have zero variance; nothing to project")
    eigvals, eigvecs = np.linalg.eigh(covariance)
    order = np.argsort(eigvals)[::-1][:dims]
    components = eigvecs[:, order].T
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(dims), pivots])
    components = components * signs[:, None]
    variance = np.clip(eigvals[order], 0.0, None)
    return PcaProjection(
        coords=centered @ components.T,
        components=components,
        explained_variance=variance,
        explained_variance_ratio=variance / total,
        mean=mean,
    )


def cluster_silhouette(coords: np.ndarray, labels: np.ndarray) -> float | None:
    """Silhouette of labeled points; None when fewer than two labels are present."""
    if len(np.unique(labels)) < 2 or len(labels) <= len(np.unique(labels)):
        return None
    return float(silhouette_score(coords, labels))


def median_latency_ms(model: Classifier, sample: np.ndarray, runs: int, warmup: int) -> float:
    """Median single-sample eval-mode forward time."""
    model.eval()
    batch = sample[None, ...]
    timings = []
    with no_grad():
        for _ in range(warmup):
            model(batch)
        for _ in range(runs):
            started = time.perf_counter()
            model(batch)
            timings.append(time.perf_counter() - started)
    return float(np.median(timings) * 1000.0)


def peak_rss_mb() -> float:
    """Peak resident set size of this process (own stack only)."""
    peak = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss
    # kilobytes on Linux, bytes on macOS
    divisor = 1024.0 * 1024.0 if sys.platform == "darwin" else 1024.0
    return float(peak) / divisor
