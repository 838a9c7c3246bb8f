"""Anomaly detectors behind a single ``fit(config, train)`` entry point."""

from __future__ import annotations

import time

import numpy as np

from ..nn import ConfigurationError, TrainingError
from .base import TrainedDetector
from .classical import IsolationForestDetector, KnnDetector, average_path_length
from .config import (
    ALGORITHMS,
    DEEP_ALGORITHMS,
    DetectorConfig,
    default_config,
    hyper_grid,
)
from .deep import AdversarialDetector, AutoencoderDetector, VaeDetector
from .kdtree import KdTree

_DEEP = {"ae": AutoencoderDetector, "vae": VaeDetector,
         "gan": AdversarialDetector, "fmgan": AdversarialDetector}


def fit(config: DetectorConfig, train) -> TrainedDetector:
    """Fit the detector described by ``config`` on clean training rows.

    Raises :class:`TrainingError` when a deep model's optimisation produces
    non-finite values. Wall-clock fit time is stored on the result.
    """
    config.validate()
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise ConfigurationError(f"need at least 2 training rows with >= 1 feature, got {x.shape}")
    if not np.isfinite(x).all():
        raise ConfigurationError("training data contains non-finite values")
    t0 = time.perf_counter()
    if config.algorithm == "knn":
        det = KnnDetector(config, x)
    elif config.algorithm == "iforest":
        det = IsolationForestDetector(config, x)
    else:
        det = _DEEP[config.algorithm].build(config, x.shape[1]).train(x)
    det.fit_time = time.perf_counter() - t0
    return det


def load_detector(blob: bytes) -> TrainedDetector:
    return TrainedDetector.from_bytes(blob)


__all__ = [
    "ALGORITHMS", "DEEP_ALGORITHMS", "AdversarialDetector", "AutoencoderDetector",
    "ConfigurationError", "DetectorConfig", "IsolationForestDetector", "KdTree",
    "KnnDetector", "TrainedDetector", "TrainingError", "VaeDetector",
    "average_path_length", "default_config", "fit", "hyper_grid", "load_detector",
]
