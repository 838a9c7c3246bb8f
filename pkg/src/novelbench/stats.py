"""
Rank-based comparison of several algorithms over many datasets.

Per-dataset ranks (1 = best, ties averaged), average ranks, the Friedman
test and the Nemenyi critical difference, plus the grouping used for
critical-difference diagrams.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import special

# Studentized range statistic divided by sqrt(2), for k = 2..10 algorithms.
NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}

# slack for comparing rank gaps to the critical difference
_CD_TOL = 1e-9


def average_tie_ranks(values) -> np.ndarray:
    """Ascending ranks starting at 1; tied values share their mean position."""
    v = np.asarray(values, dtype=float)
    if np.isnan(v).any():
        raise ValueError("cannot rank NaN")
    order = np.argsort(v, kind="stable")
    sv = v[order]
    ranks = np.empty(len(v))
    start = 0
    n = len(v)
    while start < n:
        end = start + 1
        while end < n and sv[end] == sv[start]:
            end += 1
        ranks[order[start:end]] = 0.5 * (start + end + 1)
        start = end
    return ranks


def rank_row(scores, higher_is_better: bool = True) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    if s.ndim != 1 or len(s) < 2:
        raise ValueError("need at least two scores to rank")
    return average_tie_ranks(-s if higher_is_better else s)


@dataclass
class ScoreTable:
    datasets: list[str]
    algorithms: list[str]
    scores: np.ndarray
    higher_is_better: bool = True

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.scores.shape != (len(self.datasets), len(self.algorithms)):
            raise ValueError("score matrix shape does not match row/column names")
        if np.isnan(self.scores).any():
            bad = [self.datasets[i] for i in np.flatnonzero(np.isnan(self.scores).any(axis=1))]
            raise ValueError(f"rows with missing cells: {bad}")


@dataclass
class RankTable:
    datasets: list[str]
    algorithms: list[str]
    ranks: np.ndarray
    scores: np.ndarray | None = None

    @property
    def k(self) -> int:
        return len(self.algorithms)

    @property
    def n(self) -> int:
        return len(self.datasets)

    @property
    def avg(self) -> np.ndarray:
        return self.ranks.mean(axis=0)


def average_ranks(table: ScoreTable) -> RankTable:
    ranks = np.array([rank_row(row, table.higher_is_better) for row in table.scores])
    return RankTable(list(table.datasets), list(table.algorithms), ranks, table.scores)


class FriedmanResult(NamedTuple):
    statistic: float
    p_value: float
    df: tuple[int, ...]


def friedman_test(rt: RankTable, iman_davenport: bool = False) -> FriedmanResult:
    """Friedman chi-square over average ranks.

    With ``iman_davenport`` the F-distributed refinement
    ``(N-1) chi2 / (N(k-1) - chi2)`` is returned instead.
    """
    k, n = rt.k, rt.n
    if k < 2 or n < 2:
        raise ValueError(f"need k >= 2 and N >= 2, got k={k}, N={n}")
    r = rt.avg
    chi2 = 12.0 * n / (k * (k + 1)) * (np.sum(r * r) - k * (k + 1) ** 2 / 4.0)
    chi2 = max(float(chi2), 0.0)
    if not iman_davenport:
        return FriedmanResult(chi2, float(special.gammaincc((k - 1) / 2.0, chi2 / 2.0)), (k - 1,))
    df1, df2 = k - 1, (k - 1) * (n - 1)
    denom = n * (k - 1) - chi2
    if denom <= 0:
        return FriedmanResult(math.inf, 0.0, (df1, df2))
    f = (n - 1) * chi2 / denom
    return FriedmanResult(f, float(special.fdtrc(df1, df2, f)), (df1, df2))


def nemenyi_cd(k: int, n: int, alpha: float = 0.05) -> float:
    """Nemenyi critical difference for ``k`` algorithms on ``n`` datasets."""
    if alpha not in NEMENYI_Q:
        raise ValueError(f"alpha must be one of {sorted(NEMENYI_Q)}")
    if not 2 <= k <= 10:
        raise ValueError(f"k must lie in [2, 10], got {k}")
    if n < 1:
        raise ValueError("n must be positive")
    return NEMENYI_Q[alpha][k - 2] * math.sqrt(k * (k + 1) / (6.0 * n))


def cd_groups(avg_ranks: Sequence[float], cd: float, names: Sequence[str] | None = None,
              cover: str = "minimal") -> list[tuple]:
    """Groups of algorithms whose average ranks are within ``cd`` of each other.

    Candidates are the maximal runs of rank-consecutive algorithms whose
    extreme ranks differ by at most ``cd``; runs nested in another run and
    singletons are dropped. With ``cover="all"`` every such run is returned.
    With ``cover="minimal"`` (the default, and the convention of published
    diagrams) runs are kept greedily until every neighbouring pair that some
    run joins is joined by a kept run, so a run whose pairs are all covered
    by its neighbours is not drawn.

    Groups are returned in rank order as tuples of names (or of indices into
    ``avg_ranks`` when ``names`` is omitted).
    """
    if cd <= 0:
        raise ValueError("cd must be positive")
    if cover not in ("minimal", "all"):
        raise ValueError("cover must be 'minimal' or 'all'")
    r = np.asarray(avg_ranks, dtype=float)
    order = np.argsort(r, kind="stable")
    sr = r[order]
    k = len(r)
    runs = []
    for i in range(k):
        j = i
        while j + 1 < k and sr[j + 1] - sr[i] <= cd + _CD_TOL:
            j += 1
        if j > i and (not runs or j > runs[-1][1]):
            runs.append((i, j))
    if cover == "minimal" and runs:
        # greedy interval cover of the joined neighbour pairs; pair p links
        # rank positions p and p + 1. Both starts and ends increase along runs.
        kept = []
        i, p = 0, runs[0][0]
        while i < len(runs):
            while i + 1 < len(runs) and runs[i + 1][0] <= p:
                i += 1
            kept.append(runs[i])
            reach = runs[i][1]
            i += 1
            if i < len(runs):
                p = max(reach, runs[i][0])
        runs = kept
    label = (lambda i: names[i]) if names is not None else (lambda i: int(i))
    return [tuple(label(order[t]) for t in range(s, e + 1)) for s, e in runs]


def format_rank_table(rt: RankTable, decimals: int = 2, header_lines: Sequence[str] = ()) -> str:
    """CSV with ``score(rank)`` cells and a final ``avg`` row, like the appendix tables.

    ``header_lines`` are written first as ``#`` comment lines.
    """
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", *rt.algorithms])
    scores = rt.scores if rt.scores is not None else np.full(rt.ranks.shape, np.nan)
    for name, srow, rrow in zip(rt.datasets, scores, rt.ranks):
        w.writerow([name] + [f"{s:.{decimals}f}({r:.1f})" for s, r in zip(srow, rrow)])
    w.writerow(["avg"] + [f"{s:.{decimals}f}({r:.2f})"
                          for s, r in zip(scores.mean(axis=0), rt.avg)])
    return buf.getvalue()


def parse_rank_table(text: str) -> RankTable:
    """Inverse of :func:`format_rank_table`; the ``avg`` row is recomputed, not read."""
    lines = [l for l in text.splitlines() if l.strip() and not l.startswith("#")]
    rows = list(csv.reader(lines))
    algorithms = rows[0][1:]
    datasets, scores, ranks = [], [], []
    for row in rows[1:]:
        if row[0] == "avg":
            continue
        datasets.append(row[0])
        cells = [c.rstrip(")").split("(") for c in row[1:]]
        scores.append([float(s) for s, _ in cells])
        ranks.append([float(r) for _, r in cells])
    return RankTable(datasets, algorithms, np.array(ranks), np.array(scores))
