"""
Append-only experiment store.

On disk a store is a directory with two JSON-lines files:

``results.jsonl``
    one record per experiment: key, config, status, metrics and the score
    vectors. Its bytes depend only on the experiment inputs.
``timings.jsonl``
    ``{"key": ..., "t_f": ..., "t_p": ...}`` per experiment. Wall-clock
    times differ between runs, so they are kept out of the results file.

Lines are appended as experiments finish; :meth:`ResultStore.compact`
rewrites both files sorted by key. A truncated final line (an interrupted
write) is ignored on load and removed by the next compaction.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .._util import canonical_json

log = logging.getLogger(__name__)

RESULTS_FILE = "results.jsonl"
TIMINGS_FILE = "timings.jsonl"

CSV_COLUMNS = ["dataset", "algo", "resample", "config_id", "test_auc", "train_auc",
               "prec1", "prec5", "t_f", "t_p"]


def experiment_key(dataset: str, resample: int, algorithm: str, config: dict) -> str:
    return canonical_json([dataset, int(resample), algorithm, config])


@dataclass
class ExperimentRecord:
    dataset: str
    resample: int
    algorithm: str
    config_id: int
    config: dict
    status: str = "ok"
    test_auc: float | None = None
    train_auc: float | None = None
    prec1: float | None = None
    prec5: float | None = None
    test_scores: list[float] | None = None
    tuning_scores: list[float] | None = None
    error: str | None = None
    fit_time: float | None = field(default=None, compare=False)
    predict_time: float | None = field(default=None, compare=False)

    @property
    def key(self) -> str:
        return experiment_key(self.dataset, self.resample, self.algorithm, self.config)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def result_dict(self) -> dict:
        return {
            "key": self.key,
            "dataset": self.dataset,
            "resample": self.resample,
            "algorithm": self.algorithm,
            "config_id": self.config_id,
            "config": self.config,
            "status": self.status,
            "metrics": None if not self.ok else {
                "test_auc": self.test_auc, "train_auc": self.train_auc,
                "prec1": self.prec1, "prec5": self.prec5,
            },
            "test_scores": self.test_scores,
            "tuning_scores": self.tuning_scores,
            "error": self.error,
        }

    def result_line(self) -> str:
        return json.dumps(self.result_dict(), sort_keys=True, separators=(",", ":"))

    def timing_line(self) -> str:
        return json.dumps({"key": self.key, "t_f": self.fit_time, "t_p": self.predict_time},
                          sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_result_dict(cls, d: dict) -> "ExperimentRecord":
        m = d.get("metrics") or {}
        return cls(
            dataset=d["dataset"], resample=d["resample"], algorithm=d["algorithm"],
            config_id=d["config_id"], config=d["config"], status=d["status"],
            test_auc=m.get("test_auc"), train_auc=m.get("train_auc"),
            prec1=m.get("prec1"), prec5=m.get("prec5"),
            test_scores=d.get("test_scores"), tuning_scores=d.get("tuning_scores"),
            error=d.get("error"),
        )


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError:
            if i >= len(lines) - 2:
                log.warning("%s: dropping truncated final line", path)
            else:
                raise
    return out


class ResultStore:
    """Experiment records keyed by :func:`experiment_key`.

    With ``directory=None`` the store lives in memory only.
    """

    def __init__(self, directory=None, resume: bool = True):
        self.directory = Path(directory) if directory is not None else None
        self._records: dict[str, ExperimentRecord] = {}
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        if resume:
            timings = {t["key"]: t for t in _read_jsonl(self.directory / TIMINGS_FILE)}
            for d in _read_jsonl(self.directory / RESULTS_FILE):
                rec = ExperimentRecord.from_result_dict(d)
                t = timings.get(rec.key)
                if t is not None:
                    rec.fit_time, rec.predict_time = t["t_f"], t["t_p"]
                self._records[rec.key] = rec
        self.compact()

    def __len__(self):
        return len(self._records)

    def __contains__(self, key: str):
        return key in self._records

    def __iter__(self):
        return iter(self.records())

    def get(self, key: str) -> ExperimentRecord | None:
        return self._records.get(key)

    def records(self) -> list[ExperimentRecord]:
        return [self._records[k] for k in sorted(self._records)]

    def add(self, rec: ExperimentRecord, overwrite: bool = False) -> bool:
        """Insert ``rec``; returns False if its key exists and ``overwrite`` is off."""
        key = rec.key
        if key in self._records and not overwrite:
            return False
        replaced = key in self._records
        self._records[key] = rec
        if self.directory is not None:
            if replaced:
                self.compact()
            else:
                with open(self.directory / TIMINGS_FILE, "a", encoding="utf-8") as fh:
                    fh.write(rec.timing_line() + "\n")
                with open(self.directory / RESULTS_FILE, "a", encoding="utf-8") as fh:
                    fh.write(rec.result_line() + "\n")
        return True

    def compact(self):
        if self.directory is None:
            return
        recs = self.records()
        _atomic_write(self.directory / RESULTS_FILE, "".join(r.result_line() + "\n" for r in recs))
        _atomic_write(self.directory / TIMINGS_FILE, "".join(r.timing_line() + "\n" for r in recs))

    def export_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in self.records():
                w.writerow([r.dataset, r.algorithm, r.resample, r.config_id,
                            _cell(r.test_auc), _cell(r.train_auc), _cell(r.prec1),
                            _cell(r.prec5), _cell(r.fit_time), _cell(r.predict_time)])
        return path


def _cell(v):
    return "" if v is None else repr(float(v))


def _atomic_write(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    tmp.replace(path)
