"""Metric-learning core for rare-event frame detection.

Thin re-export of the compiled module: triplet losses with gradients,
ranking metrics, activation-map helpers and the dataset/run entry points.
"""

from ._core import (
    ConfigError,
    __version__,
    auc,
    batch_all,
    batch_hard,
    bce,
    cam,
    recall_at_specificity,
    roc,
    run_eval,
    run_gen_data,
    run_train,
    threshold_metrics,
    upsample,
)

__all__ = [
    "ConfigError",
    "__version__",
    "auc",
    "batch_all",
    "batch_hard",
    "bce",
    "cam",
    "recall_at_specificity",
    "roc",
    "run_eval",
    "run_gen_data",
    "run_train",
    "threshold_metrics",
    "upsample",
]
