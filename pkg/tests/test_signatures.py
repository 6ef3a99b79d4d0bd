import numpy as np
import pytest

from rdsig.channel import Channel, channel_from_counts
from rdsig.cost_fit import FitResult, encode_rho, fit_cost_matrix
from rdsig.costs import (cost_from_matrix, generic_labels, offdiag_mask,
                         random_cost_matrix)
from rdsig.ingest import BlockRef, ConfusionCounts
from rdsig.signatures import (DegenerateCurveError, bin_gradient,
                              extract_signature, fit_exponential,
                              generalization_points, normalize_signatures,
                              rmse_diagnostics, severity_beta)
from rdsig.solver import (BASettings, RDCurve, RDPoint, ba_optimal_channel,
                          default_grid, trace_curve)
from rdsig.synth import make_observer, sample_counts

KEY = BlockRef("s", "f", "e", "c")


def curve_of(d, r):
    pts = [RDPoint(lam=1.0, rate=float(ri), distortion=float(di), channel=None,
                   converged=True, iters=1) for di, ri in zip(d, r)]
    return RDCurve(points=pts, rho=None, prior=None)


# ------------------------------------------------------- extract_signature

def test_signature_exact_line():
    sig = extract_signature(curve_of([0, 1, 2], [4, 2, 0]), accuracy=0.9)
    assert sig.beta_median == -2.0
    assert sig.beta_mean == -2.0
    assert sig.kappa == 0.0
    assert sig.auc == 4.0
    assert sig.n_slopes == 2


def test_signature_duplicate_distortion_keeps_max_rate():
    sig = extract_signature(curve_of([0, 1, 1, 2], [4, 2, 1.9, 0]), accuracy=0.5)
    assert sig.beta_median == -2.0
    assert sig.kappa == 0.0
    assert sig.auc == 4.0


def test_signature_hand_computed_variance_and_auc():
    sig = extract_signature(curve_of([0, 1, 2], [4, 3, 0]), accuracy=0.5)
    assert sig.beta_median == -2.0
    assert sig.kappa == 1.0  # population variance of [-1, -3]
    assert sig.auc == 5.0


def test_signature_degenerate_frontier():
    with pytest.raises(DegenerateCurveError, match="degenerate"):
        extract_signature(curve_of([0, 1], [1, 0]), accuracy=0.5)
    with pytest.raises(DegenerateCurveError):
        extract_signature(curve_of([1, 1, 1], [3, 2, 1]), accuracy=0.5)


def test_signature_kappa_zero_on_lines_any_slope():
    rng = np.random.default_rng(3)
    for _ in range(20):
        slope = -float(rng.uniform(0.1, 50))
        d = np.sort(rng.uniform(0, 3, size=12))
        d[0] = 0.0
        r = 5.0 + slope * d
        sig = extract_signature(curve_of(d, r), accuracy=0.5)
        assert sig.kappa <= 1e-18
        assert sig.beta_median == pytest.approx(slope, rel=1e-12)


def test_signature_permutation_invariance():
    k = 5
    labs = generic_labels(k)
    rho = random_cost_matrix(labs, 21)
    prior = np.full(k, 1.0 / k)
    base = trace_curve(rho, prior, default_grid())
    rng = np.random.default_rng(0)
    perm = rng.permutation(k)
    rho_p = cost_from_matrix(rho.rho[np.ix_(perm, perm)], labs)
    other = trace_curve(rho_p, prior[perm], default_grid())
    s1 = extract_signature(base, 0.5)
    s2 = extract_signature(other, 0.5)
    assert s1.beta_median == pytest.approx(s2.beta_median, abs=1e-12)
    # kappa aggregates squared steep-end slopes, so summation-order roundoff
    # under the permutation shows up scaled by its magnitude
    assert s1.kappa == pytest.approx(s2.kappa, rel=1e-8)
    assert s1.auc == pytest.approx(s2.auc, abs=1e-12)


def test_signature_beta_nonpositive_on_traced_frontiers():
    for seed in (1, 2, 3):
        k = 4 + seed
        labs = generic_labels(k)
        rho = random_cost_matrix(labs, 900 + seed)
        curve = trace_curve(rho, np.full(k, 1.0 / k), default_grid())
        sig = extract_signature(curve, 0.5)
        assert sig.beta_median <= 0
        assert sig.auc <= np.log2(k) * (curve.distortions().max()
                                        - curve.distortions().min()) + 1e-12
        assert sig.auc >= 0


# ------------------------------------------------------- normalization

def test_normalize_hand_zscores():
    sigs = [extract_signature(curve_of([0, 1, 2], [4, 4 - m, 4 - 2 * m]), 0.5)
            for m in (0.1, 1.0, 10.0)]
    normed = normalize_signatures(sigs)
    vals = [n.beta_n for n in normed]
    expect = 1.0 / np.sqrt(2.0 / 3.0)
    np.testing.assert_allclose(vals, [-expect, 0.0, expect], atol=1e-12)
    assert all("zero_variance" in n.flags for n in normed)  # kappa all zero


def test_normalize_groups_and_guards():
    sigs = [extract_signature(curve_of([0, 1, 2], [4, 4 - m, 4 - 2 * m]), 0.5)
            for m in (0.5, 2.0, 3.0)]
    normed = normalize_signatures(sigs, groups=["a", "a", "b"])
    assert normed[2].flags == ("singleton_group",)
    assert normed[2].beta_n == 0.0 and normed[2].kappa_n == 0.0
    assert normed[0].beta_n == pytest.approx(-1.0)
    assert normed[1].beta_n == pytest.approx(1.0)

    same = [extract_signature(curve_of([0, 1, 2], [4, 3, 2]), 0.5)] * 2
    flagged = normalize_signatures(same)
    assert all(n.beta_n == 0.0 and "zero_variance" in n.flags for n in flagged)


# ------------------------------------------------------- generalization

def counts_channel(mat):
    labs = generic_labels(mat.shape[0])
    return channel_from_counts(ConfusionCounts(KEY, mat, labs))


def test_generalization_points_identity_channel():
    ch = counts_channel(np.eye(3, dtype=np.int64) * 7)
    rho = random_cost_matrix(generic_labels(3), 5)
    pairs = generalization_points(ch, rho)
    assert len(pairs) == 6
    assert all(g == 0.0 for _, g in pairs)


def test_generalization_points_exponential_channel():
    k = 3
    labs = generic_labels(k)
    rho = random_cost_matrix(labs, 8)
    weights = np.exp(-rho.rho)
    cond = weights / weights.sum(axis=1, keepdims=True)
    ch = Channel(cond, np.full(k, 1.0 / k), labs)
    pairs = generalization_points(ch, rho)
    for d, g in pairs:
        i = [i for i in range(k) for j in range(k)
             if i != j and rho.rho[i, j] == d][0]
        assert g == pytest.approx(np.exp(-d) / weights[i].sum(), rel=1e-12)


def test_generalization_points_skip_unsupported_rows():
    mat = np.array([[5, 1, 0], [0, 0, 0], [1, 0, 4]])
    ch = counts_channel(mat)
    rho = random_cost_matrix(generic_labels(3), 1)
    pairs = generalization_points(ch, rho)
    assert len(pairs) == 4  # rows 0 and 2 only


# ------------------------------------------------------- exponential fit

def test_fit_exponential_exact_three_points():
    pairs = [(d, float(np.exp(-2.0 * d))) for d in (0.0, 0.5, 1.0)]
    fit = fit_exponential(pairs, bins=3)
    assert fit.a == pytest.approx(1.0, abs=1e-8)
    assert fit.s == pytest.approx(2.0, abs=1e-8)
    assert fit.rmse <= 1e-8
    assert fit.flags == ()


def test_fit_exponential_flat_data():
    pairs = [(d, 0.5) for d in np.linspace(0, 2, 9)]
    fit = fit_exponential(pairs, bins=3)
    assert abs(fit.s) <= 1e-6
    assert fit.a == pytest.approx(0.5, abs=1e-8)
    assert fit.rmse <= 1e-8


def test_fit_exponential_zero_data_degenerate():
    pairs = [(d, 0.0) for d in np.linspace(0, 2, 9)]
    fit = fit_exponential(pairs, bins=3)
    assert fit.a == 0.0 and fit.s == 0.0
    assert "all_zero_gradient" in fit.flags


def test_fit_exponential_recovery_grid():
    rng = np.random.default_rng(12)
    for _ in range(10):
        a = float(rng.uniform(0.1, 1.0))
        s = float(rng.uniform(0.5, 5.0))
        d = np.linspace(0, 2, 20)
        pairs = [(x, a * np.exp(-s * x)) for x in d]
        fit = fit_exponential(pairs, bins=20)
        assert fit.a == pytest.approx(a, rel=1e-6)
        assert fit.s == pytest.approx(s, rel=1e-6)


def test_bin_gradient_uses_member_mean_cost():
    pairs = [(0.0, 1.0), (0.1, 0.8), (2.0, 0.3)]
    d, g = bin_gradient(pairs, bins=3)
    assert len(d) == 2  # middle bin empty
    assert d[0] == pytest.approx(0.05)
    assert g[0] == pytest.approx(0.9)


# ------------------------------------------------------- rmse diagnostics

def test_rmse_conf_prob_self_consistent():
    k = 4
    labs = generic_labels(k)
    rho = random_cost_matrix(labs, 31)
    raw = 3.0 * rho.rho
    pt = ba_optimal_channel(raw, np.full(k, 0.25), 1.0,
                            BASettings(tol=1e-14, max_iters=200_000))
    counts = ConfusionCounts(
        KEY, np.rint(pt.channel.cond * 10 ** 7).astype(np.int64), labs)
    fit = FitResult(rho_map=rho, scale=3.0, log_posterior=0.0, converged=True,
                    iters=1, theta_map=encode_rho(raw, k))
    diag = rmse_diagnostics(counts, fit)
    assert diag.rmse_conf_prob <= 1e-6
    assert diag.rmse_emp >= 0 and diag.rmse_genexp >= 0


def test_rmse_conf_prob_sampled_counts():
    k = 4
    labs = generic_labels(k)
    rho = random_cost_matrix(labs, 32)
    obs = make_observer(rho, 4.0, np.full(k, 0.25), seed=5)
    counts = sample_counts(obs, 10 ** 6)
    fit = fit_cost_matrix(counts)
    diag = rmse_diagnostics(counts, fit)
    assert diag.rmse_conf_prob <= 0.01


# ------------------------------------------------------- severity beta

def circulant_cost(k, values):
    """Cost with constant row composition so log-linear rows share a scale."""
    rho = np.zeros((k, k))
    for off, v in enumerate(values, start=1):
        for i in range(k):
            rho[i, (i + off) % k] = v
    return cost_from_matrix(rho, generic_labels(k))


def loglinear_counts(rho, slope, total=10 ** 12):
    weights = np.exp(slope * rho.rho)
    cond = weights / weights.sum(axis=1, keepdims=True)
    mat = np.rint(cond * total).astype(np.int64)
    return ConfusionCounts(KEY, mat, rho.label_set)


def test_severity_beta_recovers_constructed_slopes():
    rho = circulant_cost(4, [0.6, 1.1, 1.3])
    for slope in (-1.0, -2.0, -3.0):
        counts = loglinear_counts(rho, slope)
        (_, beta), = severity_beta([counts], rho)
        assert beta == pytest.approx(slope, abs=1e-6)


def test_severity_beta_flat_channel_is_zero():
    rho = circulant_cost(4, [0.6, 1.1, 1.3])
    mat = np.full((4, 4), 10 ** 9, dtype=np.int64)
    counts = ConfusionCounts(KEY, mat, rho.label_set)
    (_, beta), = severity_beta([counts], rho)
    assert beta == pytest.approx(0.0, abs=1e-9)


def test_severity_beta_smoothing_arithmetic():
    # a [4, 0] row smoothed with alpha = 0.5 contributes probability 0.1
    labs = generic_labels(2)
    counts = ConfusionCounts(KEY, np.array([[4, 0], [1, 3]]), labs)
    from rdsig.channel import smooth_counts
    ch = smooth_counts(counts, 0.5)
    assert ch.cond[0, 1] == 0.1


def test_severity_beta_needs_cost_variation():
    labs = generic_labels(2)
    counts = ConfusionCounts(KEY, np.array([[4, 1], [1, 4]]), labs)
    rho = cost_from_matrix(np.ones((2, 2)) - np.eye(2), labs)
    with pytest.raises(ValueError, match="distinct cost"):
        severity_beta([counts], rho)
