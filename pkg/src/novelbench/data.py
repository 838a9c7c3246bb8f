"""
Dataset ingestion, standardisation and benchmark sampling.

Dataset CSV layout: header ``f1,...,fd,label,difficulty``; ``label`` is 0
(normal) or 1 (anomaly); ``difficulty`` is one of ``easy``, ``medium``,
``hard``, ``very_hard`` or empty, and only anomalies may carry one.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import rng_for, round_half_up

DIFFICULTIES = ("easy", "medium", "hard", "very_hard")
UNTAGGED = "untagged"
TRAIN_FRACTION = 0.8


class DatasetError(ValueError):
    """Malformed dataset file or content."""


class UnsamplableError(ValueError):
    """Not enough anomalies to build the requested benchmark instance."""


@dataclass
class RawDataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    difficulty: np.ndarray  # per row; "" for normals, UNTAGGED for untagged anomalies

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.difficulty = np.asarray(self.difficulty, dtype=object)
        n = self.features.shape[0]
        if self.features.ndim != 2 or self.labels.shape != (n,) or self.difficulty.shape != (n,):
            raise DatasetError("features, labels and difficulty must have matching rows")
        if not np.isfinite(self.features).all():
            raise DatasetError(f"{self.name}: non-finite feature values")
        if not np.isin(self.labels, (0, 1)).all():
            raise DatasetError(f"{self.name}: labels must be 0 or 1")
        if not (self.labels == 0).any():
            raise DatasetError(f"{self.name}: no normal rows")
        if any(d != "" for d in self.difficulty[self.labels == 0]):
            raise DatasetError(f"{self.name}: difficulty tag on a normal row")

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def normals(self) -> np.ndarray:
        return self.features[self.labels == 0]

    @property
    def anomalies(self) -> np.ndarray:
        return self.features[self.labels == 1]


@dataclass
class BenchmarkInstance:
    train: np.ndarray
    test: np.ndarray
    test_labels: np.ndarray
    reserve: np.ndarray  # anomalies passing the filter but not used in the test set
    meta: dict = field(default_factory=dict)

    @property
    def instance_id(self) -> str:
        return f"{self.meta['source']}/{self.meta['resample_index']}"


@dataclass
class TuningSet:
    features: np.ndarray
    labels: np.ndarray
    provenance: dict


def _parse_float(text: str, path, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"{path}:{line}: non-numeric feature {text!r}") from None


def load_dataset(path, name: str | None = None) -> RawDataset:
    path = Path(path)
    name = name or path.stem
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        if len(header) < 3 or header[-2:] != ["label", "difficulty"]:
            raise DatasetError(f"{path}:1: header must end with label,difficulty")
        d = len(header) - 2
        feats, labels, diffs = [], [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise DatasetError(f"{path}:{line}: expected {d + 2} fields, got {len(row)}")
            label = row[d].strip()
            if label not in ("0", "1"):
                raise DatasetError(f"{path}:{line}: unknown label {label!r}")
            diff = row[d + 1].strip()
            if diff and diff not in DIFFICULTIES:
                raise DatasetError(f"{path}:{line}: unknown difficulty {diff!r}")
            if label == "0" and diff:
                raise DatasetError(f"{path}:{line}: normal row carries difficulty {diff!r}")
            values = [_parse_float(v, path, line) for v in row[:d]]
            if not np.isfinite(values).all():
                raise DatasetError(f"{path}:{line}: non-finite feature")
            feats.append(values)
            labels.append(int(label))
            diffs.append(diff if label == "0" or diff else UNTAGGED)
    if not feats:
        raise DatasetError(f"{path}: no data rows")
    return RawDataset(name, np.array(feats), np.array(labels), np.array(diffs, dtype=object))


def _write_rows(path, features, labels, difficulty):
    d = features.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i + 1}" for i in range(d)] + ["label", "difficulty"])
        for x, lab, diff in zip(features, labels, difficulty):
            tag = "" if diff in ("", UNTAGGED) else diff
            w.writerow([repr(float(v)) for v in x] + [int(lab), tag])


def write_dataset(raw: RawDataset, path) -> None:
    _write_rows(path, raw.features, raw.labels, raw.difficulty)


def standardize(raw: RawDataset) -> tuple[RawDataset, tuple[np.ndarray, np.ndarray]]:
    """Scale every column to zero mean, unit population std over the normals.

    Anomalies are transformed with the normals' statistics. Constant columns
    are only centred.
    """
    normals = raw.normals
    mean = normals.mean(axis=0)
    std = normals.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    out = RawDataset(raw.name, (raw.features - mean) / scale, raw.labels.copy(),
                     raw.difficulty.copy())
    return out, (mean, std)


def anomaly_count(rate: float, n_normal: int) -> int:
    """Anomalies to add to ``n_normal`` normals so they make up ``rate`` of the set."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return 0
    return max(1, round_half_up(rate / (1.0 - rate) * n_normal))


def _difficulty_mask(raw: RawDataset, difficulty) -> np.ndarray:
    mask = raw.labels == 1
    if difficulty is not None:
        allowed = {difficulty} if isinstance(difficulty, str) else set(difficulty)
        mask &= np.isin(raw.difficulty, list(allowed))
    return mask


def sample_benchmark(raw: RawDataset, difficulty=None, contamination: float = 0.05,
                     clustered: bool = False, resample_index: int = 1,
                     seed: int = 0) -> BenchmarkInstance:
    """Draw one clean-train / contaminated-test split.

    The normals are split 80/20 at random. The test set receives
    :func:`anomaly_count` anomalies from those matching ``difficulty``
    (``None`` accepts all): drawn uniformly, or when ``clustered`` a random
    seed anomaly plus its nearest anomalous neighbours.
    """
    diff_key = None if difficulty is None else sorted(
        [difficulty] if isinstance(difficulty, str) else difficulty)
    rng = rng_for("sample", seed, raw.name, resample_index, contamination, clustered, diff_key)
    normal_idx = np.flatnonzero(raw.labels == 0)
    if len(normal_idx) < 2:
        raise UnsamplableError(f"{raw.name}: need at least 2 normal rows")
    perm = rng.permutation(normal_idx)
    n_train = min(max(round_half_up(TRAIN_FRACTION * len(perm)), 1), len(perm) - 1)
    train_idx, test_norm_idx = perm[:n_train], perm[n_train:]

    n_anom = anomaly_count(contamination, len(test_norm_idx))
    pool = np.flatnonzero(_difficulty_mask(raw, difficulty))
    if len(pool) < n_anom:
        raise UnsamplableError(
            f"{raw.name}: {n_anom} anomalies needed, only {len(pool)} match {diff_key or 'any'}")
    if n_anom == 0:
        chosen = np.empty(0, dtype=np.int64)
    elif clustered:
        centre = raw.features[rng.choice(pool)]
        diff = raw.features[pool] - centre
        near = np.argsort(np.sum(diff * diff, axis=1), kind="stable")
        chosen = pool[near[:n_anom]]
    else:
        chosen = rng.choice(pool, size=n_anom, replace=False)
    reserve_idx = np.setdiff1d(pool, chosen)

    test_idx = np.concatenate([test_norm_idx, chosen])
    test_idx = test_idx[rng.permutation(len(test_idx))]
    meta = {
        "source": raw.name,
        "resample_index": int(resample_index),
        "contamination": float(contamination),
        "difficulty": diff_key,
        "clustered": bool(clustered),
        "seed": int(seed),
        "n_train": int(len(train_idx)),
        "n_test_normal": int(len(test_norm_idx)),
        "n_test_anomaly": int(n_anom),
        "dim": int(raw.dim),
    }
    inst = BenchmarkInstance(
        train=raw.features[np.sort(train_idx)],
        test=raw.features[test_idx],
        test_labels=raw.labels[test_idx].copy(),
        reserve=raw.features[reserve_idx],
        meta=meta,
    )
    assert not (raw.labels[train_idx] == 1).any()
    return inst


def make_tuning_set(instance: BenchmarkInstance, rate: float = 0.05, seed: int = 0) -> TuningSet:
    """Training normals plus a small injected anomaly sample.

    Anomalies come from the instance's reserve. When the reserve is too
    small the test anomalies are reused as well and ``provenance["reused"]``
    is set.
    """
    n_inject = anomaly_count(rate, len(instance.train))
    if n_inject == 0:
        raise ValueError("injection rate 0 gives a tuning set without anomalies")
    rng = rng_for("tuning", seed, instance.instance_id, rate)
    supply = instance.reserve
    reused = False
    if len(supply) < n_inject:
        reused = True
        supply = np.vstack([supply, instance.test[instance.test_labels == 1]])
    if len(supply) == 0:
        raise ValueError(f"{instance.instance_id}: no anomalies available for the tuning set")
    take = min(n_inject, len(supply))
    injected = supply[rng.choice(len(supply), size=take, replace=False)]
    x = np.vstack([instance.train, injected])
    y = np.r_[np.zeros(len(instance.train), dtype=np.int64), np.ones(take, dtype=np.int64)]
    order = rng.permutation(len(x))
    provenance = {
        "instance": instance.instance_id,
        "rate": float(rate),
        "seed": int(seed),
        "n_injected": int(take),
        "reused": reused,
    }
    return TuningSet(x[order], y[order], provenance)


def synth_dataset(n_normal: int, n_anomaly: int, d: int, shift: float, seed: int = 0,
                  name: str | None = None) -> RawDataset:
    """Normals from N(0, I); anomalies from N(shift * 1, I), tagged easy."""
    if min(n_normal, n_anomaly, d) < 1:
        raise ValueError("sizes must be >= 1")
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((n_normal, d))
    anomalies = rng.standard_normal((n_anomaly, d)) + shift
    name = name or f"synth-n{n_normal}-a{n_anomaly}-d{d}-s{shift:g}-r{seed}"
    return RawDataset(
        name,
        np.vstack([normals, anomalies]),
        np.r_[np.zeros(n_normal, dtype=np.int64), np.ones(n_anomaly, dtype=np.int64)],
        np.array([""] * n_normal + ["easy"] * n_anomaly, dtype=object),
    )


def save_instance(inst: BenchmarkInstance, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n_tr = len(inst.train)
    _write_rows(directory / "train.csv", inst.train, np.zeros(n_tr), [""] * n_tr)
    _write_rows(directory / "test.csv", inst.test, inst.test_labels,
                [UNTAGGED if lab else "" for lab in inst.test_labels])
    n_res = len(inst.reserve)
    _write_rows(directory / "reserve.csv", inst.reserve.reshape(n_res, inst.train.shape[1]),
                np.ones(n_res), [UNTAGGED] * n_res)
    with open(directory / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(inst.meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def _read_rows(path, dim):
    raw = _read_table(path)
    return raw[0].reshape(-1, dim), raw[1]


def _read_table(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    d = len(header) - 2
    x = np.array([[float(v) for v in r[:d]] for r in body], dtype=float)
    y = np.array([int(r[d]) for r in body], dtype=np.int64)
    return x, y


def load_instance(directory) -> BenchmarkInstance:
    directory = Path(directory)
    with open(directory / "meta.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    d = meta["dim"]
    train, _ = _read_rows(directory / "train.csv", d)
    test, labels = _read_rows(directory / "test.csv", d)
    reserve = np.empty((0, d))
    if os.path.exists(directory / "reserve.csv"):
        reserve, _ = _read_rows(directory / "reserve.csv", d)
    return BenchmarkInstance(train, test, labels, reserve, meta)
