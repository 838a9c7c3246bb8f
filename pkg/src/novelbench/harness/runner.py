"""Experiment execution: one record per (instance, algorithm, config)."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .._util import stable_seed
from ..data import BenchmarkInstance, TuningSet, make_tuning_set
from ..detectors import DEEP_ALGORITHMS, DetectorConfig, fit, hyper_grid
from .metrics import auroc, precision_at_top
from .store import ExperimentRecord, ResultStore, experiment_key

log = logging.getLogger(__name__)


def effective_seed(key: str) -> int:
    """Training seed of an experiment, a function of its key alone."""
    return stable_seed("experiment", key)


def run_experiment(instance: BenchmarkInstance, tuning_set: TuningSet, config: DetectorConfig,
                   config_id: int = 0) -> ExperimentRecord:
    """Fit ``config`` on the clean training rows and score test and tuning sets.

    Any exception raised by the detector or by a metric (non-finite scores,
    an invalid configuration for this data) yields a ``failed`` record
    carrying the error text instead of metrics.
    """
    dataset = instance.meta["source"]
    resample = int(instance.meta["resample_index"])
    cfg_dict = config.to_dict()
    key = experiment_key(dataset, resample, config.algorithm, cfg_dict)
    rec = ExperimentRecord(dataset, resample, config.algorithm, int(config_id), cfg_dict)
    try:
        det = fit(config.with_seed(effective_seed(key)), instance.train)
        t0 = time.perf_counter()
        test_scores = det.score(instance.test)
        t_p = time.perf_counter() - t0
        tune_scores = det.score(tuning_set.features)
        test_auc = auroc(test_scores, instance.test_labels)
        train_auc = auroc(tune_scores, tuning_set.labels)
        prec1 = precision_at_top(tune_scores, tuning_set.labels, 1)
        prec5 = precision_at_top(tune_scores, tuning_set.labels, 5)
    except Exception as exc:  # noqa: BLE001 - every detector failure becomes a record
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
        log.warning("%s %s config %d failed: %s", dataset, config.algorithm, config_id, rec.error)
        return rec
    rec.test_auc, rec.train_auc, rec.prec1, rec.prec5 = test_auc, train_auc, prec1, prec5
    rec.test_scores = [float(s) for s in test_scores]
    rec.tuning_scores = [float(s) for s in tune_scores]
    rec.fit_time = float(det.fit_time)
    rec.predict_time = float(t_p)
    return rec


@dataclass(frozen=True)
class Task:
    instance_index: int
    config_id: int
    config: DetectorConfig
    key: str


def plan_grid(instances: Sequence[BenchmarkInstance], algorithms: Iterable[str], seed: int = 0,
              deep_overrides: dict | None = None) -> list[Task]:
    """All experiments of the grid in a fixed order.

    ``deep_overrides`` (for example a reduced ``steps``) apply to the deep
    models only. ``seed`` becomes the config seed and therefore part of
    every key.
    """
    tasks = []
    for idx, inst in enumerate(instances):
        n, d = inst.train.shape
        for algo in algorithms:
            extra = dict(deep_overrides or {}) if algo in DEEP_ALGORITHMS else {}
            for cid, cfg in enumerate(hyper_grid(algo, d, n, **extra)):
                cfg = cfg.with_seed(seed)
                key = experiment_key(inst.meta["source"], inst.meta["resample_index"],
                                     algo, cfg.to_dict())
                tasks.append(Task(idx, cid, cfg, key))
    return tasks


_WORKER_STATE: tuple | None = None


def _init_worker(instances, tuning_sets):
    global _WORKER_STATE
    _WORKER_STATE = (instances, tuning_sets)
    # one BLAS thread per process keeps a pool of workers from oversubscribing
    from threadpoolctl import threadpool_limits
    threadpool_limits(1)


def _run_task(task: Task) -> ExperimentRecord:
    instances, tuning_sets = _WORKER_STATE
    i = task.instance_index
    return run_experiment(instances[i], tuning_sets[i], task.config, task.config_id)


def run_grid(instances: Sequence[BenchmarkInstance], algorithms: Iterable[str], store: ResultStore,
             inject_rate: float = 0.05, seed: int = 0, workers: int = 1,
             deep_overrides: dict | None = None, max_new: int | None = None,
             progress: Callable[[int, int, ExperimentRecord], None] | None = None) -> ResultStore:
    """Run every missing experiment of the grid and add it to ``store``.

    Keys already present are skipped, so an interrupted run resumes where it
    stopped. Records are written by this process only, in completion order;
    the store is compacted to key order at the end, so the file contents do
    not depend on ``workers``. ``max_new`` stops after that many new records
    (used to emulate an interruption).
    """
    instances = list(instances)
    algorithms = list(algorithms)
    tuning_sets = [make_tuning_set(inst, inject_rate, seed) for inst in instances]
    todo = [t for t in plan_grid(instances, algorithms, seed, deep_overrides) if t.key not in store]
    if max_new is not None:
        todo = todo[:max_new]
    total = len(todo)
    done = 0

    def record(rec):
        nonlocal done
        store.add(rec)
        done += 1
        if progress is not None:
            progress(done, total, rec)

    if workers <= 1 or total <= 1:
        global _WORKER_STATE
        saved = _WORKER_STATE
        _WORKER_STATE = (instances, tuning_sets)
        try:
            for t in todo:
                record(_run_task(t))
        finally:
            _WORKER_STATE = saved
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(instances, tuning_sets)) as pool:
            futures = [pool.submit(_run_task, t) for t in todo]
            for fut in as_completed(futures):
                record(fut.result())
    if max_new is None:
        store.compact()
    return store

