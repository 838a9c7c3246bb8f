"""Metrics, experiment execution, the result store and selection criteria."""

from .metrics import UndefinedMetricError, auroc, precision_at_top
from .runner import effective_seed, plan_grid, run_experiment, run_grid
from .selection import CRITERIA, MissingCellsError, Selection, select_and_score, timing_summary
from .store import ExperimentRecord, ResultStore, experiment_key

__all__ = [
    "CRITERIA", "ExperimentRecord", "MissingCellsError", "ResultStore", "Selection",
    "UndefinedMetricError", "auroc", "effective_seed", "experiment_key", "plan_grid",
    "precision_at_top", "run_experiment", "run_grid", "select_and_score", "timing_summary",
]
