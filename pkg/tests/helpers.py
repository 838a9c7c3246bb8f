"""Shared oracles for the test suite."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from novelbench.nn import Mlp

FIXTURES = Path(__file__).parent / "fixtures"

DISPLAY_NAMES = {"knn": "kNN", "iforest": "IForest", "ae": "AE", "vae": "VAE",
                 "gan": "GAN", "fmgan": "fmGAN"}

# Denominator floor for the relative gradient error: entries whose magnitude
# is below it are compared absolutely against FLOOR * tolerance.
REL_FLOOR = 1e-6


def randomized(mlp: Mlp, seed: int, scale: float = 1.0) -> Mlp:
    """Same architecture with standard-normal weights and biases.

    Non-zero biases keep ReLU pre-activations away from exact zeros, where
    finite differences straddle a kink.
    """
    rng = np.random.default_rng(seed)
    return mlp.with_params([scale * rng.standard_normal(p.shape) for p in mlp.params()])


def numeric_gradients(loss_fn, mlp: Mlp, h: float = 1e-5) -> list[np.ndarray]:
    """Central finite differences of ``loss_fn(mlp)`` for every parameter."""
    params = [p.copy() for p in mlp.params()]
    out = []
    for i, p in enumerate(params):
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + h
            up = loss_fn(mlp.with_params(params))
            p[idx] = orig - h
            down = loss_fn(mlp.with_params(params))
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a, float), np.asarray(n, float)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), REL_FLOOR)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst


def brute_force_auroc(scores, labels) -> float:
    s = np.asarray(scores, float)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (len(pos) * len(neg))


def brute_force_knn_mean(train, queries, k) -> np.ndarray:
    out = []
    for q in np.atleast_2d(queries):
        diff = train - q
        d = np.sqrt(np.sort(np.sum(diff * diff, axis=1))[:k])
        out.append(d.mean())
    return np.array(out)


_CELL = re.compile(r"^\s*([-0-9.]+)\(([-0-9.]+)\)\s*$")


def load_reference_table(criterion: str):
    """(datasets, algorithms, scores, printed ranks, printed averages) from a fixture CSV."""
    lines = (FIXTURES / f"ranks_{criterion}.csv").read_text().splitlines()
    algorithms = lines[0].split(",")[1:]
    datasets, scores, ranks, avg = [], [], [], None
    for line in lines[1:]:
        name, *cells = line.split(",")
        parsed = [_CELL.match(c).groups() for c in cells]
        row_s = [float(s) for s, _ in parsed]
        row_r = [float(r) for _, r in parsed]
        if name == "avg":
            avg = row_r
            continue
        datasets.append(name)
        scores.append(row_s)
        ranks.append(row_r)
    return datasets, algorithms, np.array(scores), np.array(ranks), np.array(avg)
