import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from novelbench.stats import (
    RankTable,
    ScoreTable,
    average_ranks,
    average_tie_ranks,
    cd_groups,
    format_rank_table,
    friedman_test,
    nemenyi_cd,
    parse_rank_table,
    rank_row,
)

from helpers import DISPLAY_NAMES, load_reference_table

CRITERIA = ["test_auc", "train_auc", "top_5", "top_1"]
TWO_BAR_RANKS = dict(fmGAN=1.99, VAE=2.07, AE=3.47, GAN=3.90, kNN=3.94, IForest=5.63)
THREE_BAR_RANKS = dict(kNN=2.14, VAE=2.93, AE=3.13, IForest=3.53, fmGAN=4.30, GAN=4.97)


def as_sets(groups):
    return {frozenset(g) for g in groups}


# rank_row -------------------------------------------------------------------

def test_rank_row_tie_averaging():
    assert rank_row([0.9, 0.8, 0.9]).tolist() == [1.5, 3.0, 1.5]


def test_rank_row_full_tie():
    assert rank_row([0.3] * 5).tolist() == [3.0] * 5


def test_rank_row_abalone():
    assert rank_row([0.93, 0.83, 0.94, 0.94, 0.88, 0.93]).tolist() == [3.5, 6, 1.5, 1.5, 5, 3.5]


def test_rank_row_lower_is_better():
    assert rank_row([3.0, 1.0, 2.0], higher_is_better=False).tolist() == [3.0, 1.0, 2.0]


@pytest.mark.parametrize("bad", [[1.0], [0.5, float("nan")]])
def test_rank_row_rejects(bad):
    with pytest.raises(ValueError):
        rank_row(bad)


def test_average_tie_ranks_ascending():
    assert average_tie_ranks([2, 2, 1, 5]).tolist() == [2.5, 2.5, 1.0, 4.0]


score_rows = st.lists(st.integers(0, 6).map(lambda v: v / 6), min_size=2, max_size=9)


@settings(max_examples=200, deadline=None)
@given(score_rows)
def test_rank_sum_and_range(row):
    r = rank_row(row)
    k = len(row)
    assert math.isclose(r.sum(), k * (k + 1) / 2)
    assert r.min() >= 1 and r.max() <= k


@settings(max_examples=200, deadline=None)
@given(score_rows)
def test_rank_row_invariant_under_increasing_transform(row):
    s = np.array(row)
    assert np.array_equal(rank_row(s), rank_row(np.exp(3 * s) - 7))


# average_ranks ---------------------------------------------------------------

@pytest.mark.parametrize("criterion", CRITERIA)
def test_reference_tables_reproduce(criterion):
    datasets, algorithms, scores, ranks, avg = load_reference_table(criterion)
    rt = average_ranks(ScoreTable(datasets, algorithms, scores))
    assert np.array_equal(rt.ranks, ranks)
    assert np.array_equal(np.round(rt.avg, 2), np.round(avg, 2))


def test_test_auc_averages():
    datasets, algorithms, scores, _, _ = load_reference_table("test_auc")
    rt = average_ranks(ScoreTable(datasets, algorithms, scores))
    assert np.round(rt.avg, 2).tolist() == [3.94, 5.63, 3.47, 2.07, 3.90, 1.99]


def test_single_row_table():
    rt = average_ranks(ScoreTable(["only"], ["a", "b", "c"], [[0.1, 0.7, 0.4]]))
    assert rt.avg.tolist() == [3.0, 1.0, 2.0]
    assert (rt.k, rt.n) == (3, 1)


def test_row_permutation_keeps_averages():
    datasets, algorithms, scores, _, _ = load_reference_table("top_5")
    perm = np.random.default_rng(4).permutation(len(datasets))
    a = average_ranks(ScoreTable(datasets, algorithms, scores)).avg
    b = average_ranks(ScoreTable([datasets[i] for i in perm], algorithms, scores[perm])).avg
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_score_table_rejects_gaps_and_bad_shape():
    with pytest.raises(ValueError, match="missing"):
        ScoreTable(["d1", "d2"], ["a", "b"], [[0.1, 0.2], [np.nan, 0.3]])
    with pytest.raises(ValueError, match="shape"):
        ScoreTable(["d1"], ["a", "b"], [[0.1, 0.2, 0.3]])


# friedman --------------------------------------------------------------------

def ranks_table(ranks):
    ranks = np.asarray(ranks, dtype=float)
    return RankTable([f"d{i}" for i in range(len(ranks))],
                     [f"a{j}" for j in range(ranks.shape[1])], ranks)


def test_friedman_all_ties():
    res = friedman_test(ranks_table(np.full((8, 4), 2.5)))
    assert res.statistic == 0.0
    assert res.p_value == 1.0


def test_friedman_two_algorithms_one_always_wins():
    res = friedman_test(ranks_table([[1.0, 2.0]] * 10))
    assert math.isclose(res.statistic, 10.0, rel_tol=1e-12)
    assert res.p_value == pytest.approx(0.0015654, abs=5e-6)


def test_friedman_rejects_on_test_auc_table():
    datasets, algorithms, scores, _, _ = load_reference_table("test_auc")
    res = friedman_test(average_ranks(ScoreTable(datasets, algorithms, scores)))
    assert res.df == (5,)
    assert res.p_value < 0.05


def test_friedman_matches_scipy():
    from scipy import stats as sps
    # scipy applies a tie correction, so only compare on a tie-free table
    rng = np.random.default_rng(0)
    m = rng.random((20, 5))
    ours = friedman_test(average_ranks(ScoreTable([str(i) for i in range(20)], list("abcde"), m)))
    ref = sps.friedmanchisquare(*m.T)
    assert ours.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert ours.p_value == pytest.approx(ref.pvalue, rel=1e-8)


def test_friedman_invariant_under_row_and_column_permutation():
    rng = np.random.default_rng(2)
    m = rng.integers(0, 5, (12, 5)) / 4
    names = [str(i) for i in range(12)]
    base = friedman_test(average_ranks(ScoreTable(names, list("abcde"), m))).statistic
    rows, cols = rng.permutation(12), rng.permutation(5)
    moved = friedman_test(average_ranks(ScoreTable(names, list("vwxyz"), m[rows][:, cols])))
    assert moved.statistic == pytest.approx(base, rel=1e-12, abs=1e-12)


def test_friedman_iman_davenport():
    rt = ranks_table([[1, 2, 3], [1, 3, 2], [2, 1, 3], [1, 2, 3]])
    chi2 = friedman_test(rt).statistic
    res = friedman_test(rt, iman_davenport=True)
    assert res.df == (2, 6)
    assert res.statistic == pytest.approx(3 * chi2 / (4 * 2 - chi2))


@pytest.mark.parametrize("shape", [(1, 3), (5, 1)])
def test_friedman_degenerate_sizes(shape):
    with pytest.raises(ValueError):
        friedman_test(ranks_table(np.ones(shape)))


# nemenyi ---------------------------------------------------------------------

def test_nemenyi_six_on_thirty_five():
    assert abs(nemenyi_cd(6, 35, 0.05) - 1.2745) <= 5e-4


@pytest.mark.parametrize("n", [1, 4, 10, 35])
def test_nemenyi_two_algorithms(n):
    assert nemenyi_cd(2, n) == pytest.approx(1.960 / math.sqrt(n), rel=1e-12)


def test_nemenyi_decreases_in_n():
    for k in range(2, 11):
        for alpha in (0.05, 0.10):
            cds = [nemenyi_cd(k, n, alpha) for n in range(1, 60)]
            assert all(a > b for a, b in zip(cds, cds[1:]))


@pytest.mark.parametrize("args", [(1, 10, 0.05), (11, 10, 0.05), (4, 10, 0.01), (4, 0, 0.05)])
def test_nemenyi_rejects(args):
    with pytest.raises(ValueError):
        nemenyi_cd(*args)


# cd_groups -------------------------------------------------------------------

def test_cd_groups_two_bars():
    groups = cd_groups(list(TWO_BAR_RANKS.values()), 1.2745, list(TWO_BAR_RANKS))
    assert as_sets(groups) == {frozenset({"fmGAN", "VAE"}), frozenset({"AE", "GAN", "kNN"})}


def test_cd_groups_three_overlapping_bars():
    groups = cd_groups(list(THREE_BAR_RANKS.values()), 1.2745, list(THREE_BAR_RANKS))
    assert as_sets(groups) == {frozenset({"kNN", "VAE", "AE"}),
                               frozenset({"AE", "IForest", "fmGAN"}),
                               frozenset({"fmGAN", "GAN"})}


def test_cd_groups_all_cover_keeps_every_maximal_run():
    groups = cd_groups(list(THREE_BAR_RANKS.values()), 1.2745, list(THREE_BAR_RANKS), cover="all")
    assert frozenset({"VAE", "AE", "IForest"}) in as_sets(groups)
    assert len(groups) == 4


@pytest.mark.parametrize("criterion", ["train_auc", "top_5"])
def test_cd_groups_on_reference_averages_run(criterion):
    *_, avg = load_reference_table(criterion)
    groups = cd_groups(avg, 1.2745)
    assert all(len(g) >= 2 for g in groups)


def test_cd_groups_single_clique():
    assert cd_groups([1.0, 1.3, 1.9, 2.1], 1.2745) == [(0, 1, 2, 3)]


def test_cd_groups_none():
    assert cd_groups([1.0, 3.0, 5.0], 1.2745) == []


def test_cd_groups_indices_in_rank_order():
    assert cd_groups([3.0, 1.0, 1.5], 1.0) == [(1, 2)]


def test_cd_groups_rejects_nonpositive_cd():
    with pytest.raises(ValueError):
        cd_groups([1.0, 2.0], 0.0)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(1, 8, allow_nan=False), min_size=2, max_size=9),
       st.floats(0.1, 3.0), st.sampled_from(["minimal", "all"]))
def test_cd_groups_properties(ranks, cd, cover):
    groups = cd_groups(ranks, cd, cover=cover)
    r = np.asarray(ranks)
    order = list(np.argsort(r, kind="stable"))
    spans = []
    for g in groups:
        assert len(g) >= 2
        vals = r[list(g)]
        assert vals.max() - vals.min() <= cd + 1e-9
        pos = [order.index(i) for i in g]
        assert pos == list(range(pos[0], pos[0] + len(g)))
        spans.append(set(pos))
    for a in spans:
        for b in spans:
            assert a is b or not a <= b
    if cover == "minimal":
        # every adjacent pair within reach of some maximal run stays joined
        joined = {p for s in spans for p in s if p + 1 in s}
        all_runs = [set(order.index(i) for i in g) for g in cd_groups(ranks, cd, cover="all")]
        assert joined == {p for s in all_runs for p in s if p + 1 in s}


# rank table CSV --------------------------------------------------------------

def test_rank_table_csv_round_trip():
    datasets, algorithms, scores, _, _ = load_reference_table("test_auc")
    rt = average_ranks(ScoreTable(datasets, algorithms, scores))
    text = format_rank_table(rt, header_lines=["seed=0"])
    assert text.startswith("# seed=0\n")
    back = parse_rank_table(text)
    assert back.datasets == datasets
    assert np.array_equal(back.ranks, rt.ranks)
    assert np.allclose(back.scores, scores)
    assert text.splitlines()[-1].startswith("avg,")


def test_display_names_cover_fixture_columns():
    _, algorithms, *_ = load_reference_table("test_auc")
    assert set(algorithms) == set(DISPLAY_NAMES)
