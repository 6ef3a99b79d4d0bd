import numpy as np
import pytest

from rdsig.channel import (channel_from_counts, expected_distortion,
                           mutual_information, smooth_counts, summarize)
from rdsig.costs import generic_labels, zero_one_cost
from rdsig.ingest import BlockRef, ConfusionCounts

KEY = BlockRef("s", "f", "e", "c")


def counts_of(mat, k=None):
    mat = np.asarray(mat)
    labs = generic_labels(mat.shape[0] if k is None else k)
    return ConfusionCounts(KEY, mat, labs)


def hb(p):
    return -p * np.log2(p) - (1 - p) * np.log2(1 - p)


def test_row_normalization():
    ch = channel_from_counts(counts_of([[3, 1], [2, 2]]))
    np.testing.assert_allclose(ch.cond[0], [0.75, 0.25])
    np.testing.assert_allclose(ch.prior, [0.5, 0.5])


def test_identity_counts_empirical_prior():
    diag = np.diag(np.arange(1, 17))
    ch = channel_from_counts(counts_of(diag))
    np.testing.assert_array_equal(ch.cond, np.eye(16))
    np.testing.assert_allclose(ch.prior, np.arange(1, 17) / np.arange(1, 17).sum())


def test_zero_row_excluded_from_support():
    ch = channel_from_counts(counts_of([[2, 0, 0], [0, 3, 0], [0, 0, 0]]))
    assert ch.support.tolist() == [True, True, False]
    assert ch.prior[2] == 0.0
    np.testing.assert_allclose(ch.prior[:2], [0.4, 0.6])
    ch_u = channel_from_counts(counts_of([[2, 0, 0], [0, 3, 0], [0, 0, 0]]), "uniform")
    np.testing.assert_allclose(ch_u.prior, [0.5, 0.5, 0.0])


def test_all_zero_rows_error():
    counts = counts_of([[1, 0], [0, 0]])
    counts.counts[0, 0] = 0
    with pytest.raises(ValueError, match="zero counts"):
        channel_from_counts(counts)


def test_smoothing_forced_arithmetic():
    ch = smooth_counts(counts_of([[4, 0], [1, 3]]), alpha=0.5)
    np.testing.assert_array_equal(ch.cond[0], [0.9, 0.1])


def test_smoothing_empty_row_is_uniform():
    mat = np.array([[1, 0, 0], [0, 0, 0], [0, 0, 1]])
    ch = smooth_counts(ConfusionCounts(KEY, mat, generic_labels(3)), alpha=0.5)
    np.testing.assert_allclose(ch.cond[1], [1 / 3, 1 / 3, 1 / 3])
    assert ch.support.all()


def test_smoothing_alpha_zero_falls_back():
    ch = smooth_counts(counts_of([[3, 1], [2, 2]]), alpha=0.0)
    ref = channel_from_counts(counts_of([[3, 1], [2, 2]]))
    np.testing.assert_array_equal(ch.cond, ref.cond)
    assert ch.flags == ()
    flagged = smooth_counts(counts_of([[3, 1], [0, 0]]), alpha=0.0)
    assert "zero_rows_unsmoothed" in flagged.flags


def test_smoothing_limit_matches_plain_channel():
    rng = np.random.default_rng(0)
    mat = rng.integers(1, 40, size=(5, 5))
    a = smooth_counts(counts_of(mat), alpha=1e-9)
    b = channel_from_counts(counts_of(mat))
    assert np.abs(a.cond - b.cond).max() < 1e-6


def test_mutual_information_identity_is_log2k():
    ch = channel_from_counts(counts_of(np.eye(16, dtype=int)))
    assert mutual_information(ch) == pytest.approx(4.0, abs=1e-12)


def test_mutual_information_useless_channel_is_zero():
    ch = channel_from_counts(counts_of([[2, 2], [2, 2]]))
    assert mutual_information(ch) == pytest.approx(0.0, abs=1e-12)


def test_mutual_information_binary_symmetric():
    mat = np.array([[90, 10], [10, 90]])
    ch = channel_from_counts(counts_of(mat))
    assert mutual_information(ch) == pytest.approx(1 - hb(0.1), abs=1e-12)


def test_mi_never_exceeds_log2k_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        k = int(rng.integers(2, 7))
        mat = rng.integers(0, 30, size=(k, k))
        mat[0, 0] += 1
        ch = channel_from_counts(counts_of(mat, k))
        mi = mutual_information(ch)
        assert -1e-12 <= mi <= np.log2(k) + 1e-12


def test_expected_distortion_cases():
    labs4 = generic_labels(4)
    rho = zero_one_cost(labs4)
    ident = channel_from_counts(counts_of(np.eye(4, dtype=int) * 5))
    assert expected_distortion(ident, rho) == 0.0
    uniform = channel_from_counts(counts_of(np.ones((4, 4), dtype=int)))
    assert expected_distortion(uniform, rho) == pytest.approx(0.75, abs=1e-12)
    bsc = channel_from_counts(counts_of([[90, 10], [10, 90]]))
    rho2 = zero_one_cost(generic_labels(2))
    assert expected_distortion(bsc, rho2) == pytest.approx(0.1, abs=1e-12)


def test_dimension_mismatch_raises():
    bsc = channel_from_counts(counts_of([[9, 1], [1, 9]]))
    with pytest.raises(ValueError, match="does not match"):
        expected_distortion(bsc, np.ones((3, 3)))


def test_relabeling_invariance():
    rng = np.random.default_rng(7)
    mat = rng.integers(1, 25, size=(5, 5))
    rho = rng.uniform(0.1, 2.0, size=(5, 5))
    np.fill_diagonal(rho, 0.0)
    ch = channel_from_counts(counts_of(mat, 5))
    perm = rng.permutation(5)
    ch_p = channel_from_counts(counts_of(mat[np.ix_(perm, perm)], 5))
    assert mutual_information(ch_p) == pytest.approx(mutual_information(ch), abs=1e-12)
    assert expected_distortion(ch_p, rho[np.ix_(perm, perm)]) == pytest.approx(
        expected_distortion(ch, rho), abs=1e-12)


def test_summarize_accuracy_is_prior_weighted_trace():
    mat = np.array([[8, 2], [1, 1]])
    ch = channel_from_counts(counts_of(mat))
    info = summarize(ch, zero_one_cost(generic_labels(2)))
    assert info.accuracy == pytest.approx(10 / 12 * 0.8 + 2 / 12 * 0.5)
    assert info.expected_distortion == pytest.approx(1 - info.accuracy)
