from __future__ import annotations

import numpy as np

from .._util import round_half_up
from ..stats import average_tie_ranks


class UndefinedMetricError(ValueError):
    pass


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Anomalies (label 1) should score higher; ties count one half.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes")
    if not np.isfinite(s).all():
        raise UndefinedMetricError("non-finite scores")
    ranks = average_tie_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def precision_at_top(scores, labels, p: float) -> float:
    """Fraction of anomalies among the ``p`` percent highest-scored samples.

    The head holds ``max(1, round(p * n / 100))`` samples; equal scores are
    ordered by sample index.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if len(s) == 0:
        raise UndefinedMetricError("empty input")
    if not 0 < p <= 100:
        raise ValueError(f"p must lie in (0, 100], got {p}")
    m = max(1, round_half_up(p * len(s) / 100.0))
    head = np.argsort(-s, kind="stable")[:m]
    return float(np.mean(y[head] == 1))
