import numpy as np
import pytest

from mtsdvgan.stats import friedman_ranks, nemenyi_cd

# Published per-dataset rankings of the twelve compared methods on the
# three datasets, used as a fixed reconstruction target.
METHODS = ("ours", "transformer", "usad", "madgan", "ganad", "egan",
           "ae", "ocsvm", "iforest", "fb", "knn", "pca")
RANK_ROWS = {
    "swat": (1, 2, 4, 10, 3, 6, 5, 7, 8, 11, 12, 9),
    "wadi": (1, 2, 6, 3, 4, 8, 5, 9, 7, 11, 12, 10),
    "nsl": (2, 3, 4, 5, 6, 1, 8, 9, 7, 11, 12, 10),
}
PUBLISHED_AVERAGES = (1.33, 2.33, 4.67, 6.0, 4.33, 5.0, 6.0, 8.33, 7.33,
                      11.0, 12.0, 9.67)


def scores_from_ranks(rank_row):
    """Higher-is-better scores whose ranking reproduces rank_row."""
    k = len(rank_row)
    return [k + 1 - r for r in rank_row]


def test_friedman_reproduces_published_average_ranks():
    matrix = np.array([scores_from_ranks(RANK_ROWS[ds])
                       for ds in ("swat", "wadi", "nsl")], dtype=float)
    table = friedman_ranks(matrix, methods=list(METHODS),
                           datasets=["swat", "wadi", "nsl"])
    for avg, published in zip(table.average, PUBLISHED_AVERAGES):
        assert abs(avg - published) < 0.01
    assert table.average[0] == pytest.approx(4.0 / 3.0)  # best method: 1.33


def test_friedman_full_tie_gives_midrank():
    matrix = np.array([[5.0, 5.0, 5.0, 5.0]])
    table = friedman_ranks(matrix)
    np.testing.assert_allclose(table.ranks[0], 2.5)  # (m + 1) / 2


def test_friedman_domination():
    matrix = np.array([[2.0, 1.0], [5.0, 4.0], [0.3, 0.2]])
    table = friedman_ranks(matrix)
    np.testing.assert_allclose(table.average, [1.0, 2.0])


def test_friedman_rows_sum_without_ties():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = int(rng.integers(2, 10))
        matrix = rng.permutation(k * 3).reshape(3, k).astype(float)
        table = friedman_ranks(matrix)
        for row in table.ranks:
            assert row.sum() == k * (k + 1) / 2


def test_friedman_against_brute_force_ranking():
    rng = np.random.default_rng(1)
    matrix = rng.normal(size=(4, 6))
    table = friedman_ranks(matrix)
    for i, row in enumerate(matrix):
        order = np.argsort(-row)
        expected = np.empty(6)
        expected[order] = np.arange(1, 7)
        np.testing.assert_array_equal(table.ranks[i], expected)


def test_friedman_lower_is_better_mode():
    matrix = np.array([[1.0, 2.0, 3.0]])
    table = friedman_ranks(matrix, higher_is_better=False)
    np.testing.assert_array_equal(table.ranks[0], [1.0, 2.0, 3.0])


def test_friedman_rejects_nonfinite():
    with pytest.raises(ValueError):
        friedman_ranks(np.array([[1.0, np.nan]]))


def test_nemenyi_paper_setting():
    # k = 6 methods over N = 3 datasets at alpha 0.05
    assert nemenyi_cd(6, 3, 0.05) == pytest.approx(4.354, abs=1e-3)


def test_nemenyi_two_methods_single_dataset():
    assert nemenyi_cd(2, 1, 0.05) == pytest.approx(1.960, abs=1e-9)


def test_nemenyi_vanishes_with_many_datasets():
    values = [nemenyi_cd(5, n, 0.05) for n in (1, 3, 10, 100, 10_000)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] < 0.1


def test_nemenyi_alpha_and_k_validation():
    with pytest.raises(ValueError):
        nemenyi_cd(6, 3, 0.01)
    with pytest.raises(ValueError):
        nemenyi_cd(25, 3, 0.05)
    with pytest.raises(ValueError):
        nemenyi_cd(1, 3, 0.05)


def test_friedman_cd_k_override():
    matrix = np.random.default_rng(2).normal(size=(3, 12))
    table = friedman_ranks(matrix, cd_k=6)
    assert table.k == 6
    assert table.cd == pytest.approx(nemenyi_cd(6, 3, 0.05))
