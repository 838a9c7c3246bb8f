"""Hyperparameter selection criteria and the tables derived from a store."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..stats import ScoreTable
from .store import ResultStore

log = logging.getLogger(__name__)

# criterion name -> record attribute that is maximised
CRITERIA = {
    "test_auc": "test_auc",
    "train_auc": "train_auc",
    "top_5": "prec5",
    "top_1": "prec1",
}


class MissingCellsError(ValueError):
    def __init__(self, missing):
        self.missing = list(missing)
        listing = ", ".join(f"{d}/{a}" for d, a in self.missing)
        super().__init__(f"{len(self.missing)} (dataset, algorithm) cells have no result: {listing}")


@dataclass
class Selection:
    criterion: str
    cells: dict[tuple[str, str], float]
    chosen: dict[tuple[str, int, str], int] = field(default_factory=dict)
    excluded: list[tuple[str, int, str]] = field(default_factory=list)

    def score_table(self, datasets: Sequence[str] | None = None,
                    algorithms: Sequence[str] | None = None) -> ScoreTable:
        datasets = sorted({d for d, _ in self.cells}) if datasets is None else list(datasets)
        algorithms = sorted({a for _, a in self.cells}) if algorithms is None else list(algorithms)
        missing = [(d, a) for d in datasets for a in algorithms if (d, a) not in self.cells]
        if missing:
            raise MissingCellsError(missing)
        m = np.array([[self.cells[d, a] for a in algorithms] for d in datasets], dtype=float)
        return ScoreTable(datasets, algorithms, m)


def select_and_score(store: ResultStore, criterion: str) -> Selection:
    """Mean test AUROC per (dataset, algorithm) after selecting by ``criterion``.

    Within each (dataset, resample, algorithm) the config with the largest
    criterion value wins, ties going to the lowest config id. The winner's
    test AUROC is averaged over resamples. Failed records are ignored; a
    (dataset, resample, algorithm) whose records all failed is excluded
    with a warning.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {sorted(CRITERIA)}, got {criterion!r}")
    attr = CRITERIA[criterion]
    groups = defaultdict(list)
    for rec in store.records():
        groups[rec.dataset, rec.resample, rec.algorithm].append(rec)
    chosen, excluded = {}, []
    per_cell = defaultdict(list)
    for gkey in sorted(groups):
        ok = [r for r in groups[gkey] if r.ok and getattr(r, attr) is not None]
        if not ok:
            log.warning("all configs failed for %s resample %d %s; excluded", *gkey)
            excluded.append(gkey)
            continue
        best = min(ok, key=lambda r: (-getattr(r, attr), r.config_id))
        chosen[gkey] = best.config_id
        per_cell[gkey[0], gkey[2]].append(best.test_auc)
    cells = {c: float(np.mean(v)) for c, v in sorted(per_cell.items())}
    return Selection(criterion, cells, chosen, excluded)


@dataclass(frozen=True)
class Timing:
    fit: float
    predict: float
    count: int


def timing_summary(store: ResultStore) -> dict[str, Timing]:
    """Mean fit and predict seconds per algorithm over successful records."""
    acc = defaultdict(list)
    for rec in store.records():
        if rec.ok and rec.fit_time is not None and rec.predict_time is not None:
            acc[rec.algorithm].append((rec.fit_time, rec.predict_time))
    return {a: Timing(float(np.mean([t[0] for t in v])), float(np.mean([t[1] for t in v])), len(v))
            for a, v in sorted(acc.items())}
