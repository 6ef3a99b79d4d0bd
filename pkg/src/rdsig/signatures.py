"""Geometric signatures of traced frontiers and generalization-gradient fits.

From a frontier: the median and mean of finite-difference slopes (beta), the
population variance of those slopes (kappa, zero for an exactly linear
trade-off), and the trapezoidal area under the curve (AUC). Normalized
variants are z-scores of log10 magnitudes within a declared comparison set.

From a channel plus cost geometry: generalization points (confusion
probability against cost), binned exponential-decay fits a*exp(-s*d), and
the RMSE diagnostics that compare empirical behavior to the model-implied
channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Channel, channel_from_counts, smooth_counts
from .costs import CostMatrix, offdiag_mask
from .ingest import ConfusionCounts
from .solver import RDCurve, BASettings, ba_optimal_channel
from .cost_fit import FitResult, INFERENCE_BA

KAPPA_LOG_FLOOR = 1e-12
DEFAULT_BINS = 12
EXPFIT_MAX_ITERS = 200


class DegenerateCurveError(ValueError):
    """Frontier has too few usable points for slope statistics."""


@dataclass(frozen=True)
class RDSignature:
    beta_median: float
    beta_mean: float
    kappa: float
    auc: float
    accuracy: float
    n_slopes: int


@dataclass(frozen=True)
class NormalizedSignature:
    beta_n: float
    kappa_n: float
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExpFit:
    a: float
    s: float
    rmse: float
    n_bins: int
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class FitDiagnostics:
    rmse_conf_prob: float
    rmse_emp: float
    rmse_genexp: float
    flags: tuple[str, ...] = ()


def _dedup_points(d, r):
    """Sort by distortion and collapse duplicate distortions keeping max rate."""
    order = np.lexsort((-r, d))
    d, r = d[order], r[order]
    keep_d, keep_r = [d[0]], [r[0]]
    for i in range(1, len(d)):
        if d[i] == keep_d[-1]:
            if r[i] > keep_r[-1]:
                keep_r[-1] = r[i]
        else:
            keep_d.append(d[i])
            keep_r.append(r[i])
    return np.array(keep_d), np.array(keep_r)


def extract_signature(curve: RDCurve, accuracy: float) -> RDSignature:
    """Slope/curvature/AUC summary of one traced frontier.

    Slopes are finite differences over consecutive de-duplicated points;
    kappa is their population variance; AUC integrates the rate over the
    traced distortion range (non-finite points dropped).
    """
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy must be in [0, 1], got {accuracy}")
    d = curve.distortions()
    r = curve.rates()
    finite = np.isfinite(d) & np.isfinite(r)
    d, r = d[finite], r[finite]
    if d.size:
        d, r = _dedup_points(d, r)
    if d.size < 3:
        raise DegenerateCurveError(
            f"degenerate frontier: {d.size} usable points after de-duplication")
    slopes = np.diff(r) / np.diff(d)
    return RDSignature(
        beta_median=float(np.median(slopes)),
        beta_mean=float(slopes.mean()),
        kappa=float(slopes.var()),
        auc=float(np.trapezoid(r, d)),
        accuracy=float(accuracy),
        n_slopes=len(slopes),
    )


def normalize_signatures(sigs: list[RDSignature],
                         groups: list = None) -> list[NormalizedSignature]:
    """z-scores of log10 |beta_median| and log10 kappa within each group.

    ``groups`` assigns each signature to a normalization set (default: one
    shared set). Singleton or zero-variance groups yield zeros plus a flag.
    """
    if groups is None:
        groups = [0] * len(sigs)
    if len(groups) != len(sigs):
        raise ValueError("groups must align with signatures")
    log_beta = np.array([np.log10(max(abs(s.beta_median), KAPPA_LOG_FLOOR)) for s in sigs])
    log_kappa = np.array([np.log10(max(s.kappa, KAPPA_LOG_FLOOR)) for s in sigs])
    out: list[NormalizedSignature] = [None] * len(sigs)
    for g in sorted(set(groups), key=str):
        idx = [i for i, gi in enumerate(groups) if gi == g]
        if len(idx) < 2:
            for i in idx:
                out[i] = NormalizedSignature(0.0, 0.0, ("singleton_group",))
            continue
        zb, fb = _zscore(log_beta[idx])
        zk, fk = _zscore(log_kappa[idx])
        flags = tuple(sorted(set(fb + fk)))
        for pos, i in enumerate(idx):
            out[i] = NormalizedSignature(float(zb[pos]), float(zk[pos]), flags)
    return out


def _zscore(vals):
    sd = vals.std()
    if sd == 0:
        return np.zeros_like(vals), ("zero_variance",)
    return (vals - vals.mean()) / sd, ()


def generalization_points(channel: Channel, rho) -> list[tuple[float, float]]:
    """(cost, confusion probability) pairs for all supported off-diagonal cells."""
    mat = np.asarray(getattr(rho, "rho", rho), dtype=np.float64)
    if mat.shape != channel.cond.shape:
        raise ValueError("cost and channel dimensions differ")
    k = channel.k
    pairs = []
    for i in range(k):
        if not channel.support[i]:
            continue
        for j in range(k):
            if i != j:
                pairs.append((float(mat[i, j]), float(channel.cond[i, j])))
    return pairs


def bin_gradient(pairs, bins: int):
    """Mean confusion probability per nonempty equal-width cost bin.

    The representative cost of a bin is the mean cost of its members, so
    exact exponential data stays exactly exponential after binning.
    """
    if bins < 3:
        raise ValueError("need at least 3 bins")
    d = np.array([p[0] for p in pairs])
    g = np.array([p[1] for p in pairs])
    lo, hi = d.min(), d.max()
    if hi <= lo:
        raise ValueError("need at least 2 distinct cost values to bin")
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
    centers, means = [], []
    for b in range(bins):
        sel = idx == b
        if sel.any():
            centers.append(d[sel].mean())
            means.append(g[sel].mean())
    return np.array(centers), np.array(means)


def fit_exponential(pairs, bins: int = DEFAULT_BINS) -> ExpFit:
    """Least-squares a*exp(-s*d) fit to the binned gradient.

    Gauss-Newton with Levenberg damping, started from a log-linear
    regression over strictly positive bins. All-zero data returns the
    degenerate (0, 0) fit with a flag; hitting the iteration cap returns the
    best iterate with a flag.
    """
    if len(pairs) < 3:
        raise ValueError("need at least 3 (cost, probability) pairs")
    d, g = bin_gradient(pairs, bins)
    if (g <= 0).all():
        return ExpFit(0.0, 0.0, 0.0, len(d), ("all_zero_gradient",))

    pos = g > 0
    if pos.sum() >= 2:
        slope, intercept = np.polyfit(d[pos], np.log(g[pos]), 1)
        a, s = float(np.exp(intercept)), float(-slope)
    else:
        a, s = float(g.max()), 1.0
    s = max(s, 0.0)

    def residuals(a_, s_):
        return g - a_ * np.exp(-s_ * d)

    cost = float((residuals(a, s) ** 2).sum())
    mu = 1e-8
    flags = ()
    for it in range(EXPFIT_MAX_ITERS):
        e = np.exp(-s * d)
        r = g - a * e
        jac = np.column_stack([-e, a * d * e])
        jtj = jac.T @ jac
        jtr = jac.T @ r
        step_ok = False
        for _ in range(50):
            try:
                delta = np.linalg.solve(jtj + mu * np.eye(2), -jtr)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            a_new, s_new = a + delta[0], s + delta[1]
            new_cost = float((residuals(a_new, s_new) ** 2).sum())
            if new_cost <= cost:
                step_ok = True
                break
            mu *= 10.0
        if not step_ok:
            break
        improved = cost - new_cost
        a, s, cost = a_new, s_new, new_cost
        mu = max(mu * 0.3, 1e-12)
        if improved <= 1e-16 * max(cost, 1e-16) or float(np.abs(delta).max()) < 1e-12:
            break
    else:
        flags = ("expfit_iteration_cap",)
    rmse = float(np.sqrt(cost / len(d)))
    return ExpFit(float(a), float(s), rmse, len(d), flags)


def rmse_diagnostics(counts: ConfusionCounts, fit: FitResult,
                     settings: BASettings = INFERENCE_BA,
                     bins: int = DEFAULT_BINS) -> FitDiagnostics:
    """Three goodness-of-fit RMSEs for one block.

    * rmse_conf_prob: empirical vs model-implied off-diagonal confusion
      probabilities (model channel solved at the fitted raw cost).
    * rmse_emp: residual of the best-fit a*exp(-s*d) to the empirical
      binned gradient.
    * rmse_genexp: empirical binned gradient vs exp(-s*d) with amplitude
      fixed at 1 and s taken from the model-implied channel's own
      exponential fit (the rate-matched curve).
    """
    emp = channel_from_counts(counts)
    k = counts.label_set.k
    point = ba_optimal_channel(fit.rho_raw(), emp.prior, 1.0, settings,
                               label_set=counts.label_set)
    model = point.channel

    mask = offdiag_mask(k) & emp.support[:, None]
    diff = emp.cond[mask] - model.cond[mask]
    rmse_conf = float(np.sqrt((diff ** 2).mean()))

    rho_norm = fit.rho_map
    emp_pairs = generalization_points(emp, rho_norm)
    emp_fit = fit_exponential(emp_pairs, bins)
    flags = emp_fit.flags

    model_pairs = generalization_points(model, rho_norm)
    model_fit = fit_exponential(model_pairs, bins)
    flags = flags + model_fit.flags
    d_emp, g_emp = bin_gradient(emp_pairs, bins)
    pred = np.exp(-model_fit.s * d_emp)
    rmse_genexp = float(np.sqrt(((g_emp - pred) ** 2).mean()))

    return FitDiagnostics(rmse_conf_prob=rmse_conf, rmse_emp=emp_fit.rmse,
                          rmse_genexp=rmse_genexp,
                          flags=tuple(dict.fromkeys(flags)))


def severity_beta(counts_by_level: list[ConfusionCounts], rho,
                  alpha: float = 0.5) -> list[tuple[str, float]]:
    """Per-level slope of log confusion probability against cost.

    Counts are pseudocount-smoothed (stabilizes the log of empty cells),
    then all off-diagonal cells are pooled into one least-squares line per
    level; the slope is that level's beta.
    """
    mat = np.asarray(getattr(rho, "rho", rho), dtype=np.float64)
    out = []
    for counts in counts_by_level:
        k = counts.label_set.k
        if mat.shape != (k, k):
            raise ValueError("cost and counts dimensions differ")
        ch = smooth_counts(counts, alpha)
        mask = offdiag_mask(k) & ch.support[:, None]
        x = mat[mask]
        y = ch.cond[mask]
        good = y > 0
        x, y = x[good], np.log(y[good])
        if np.unique(x).size < 2:
            raise ValueError(
                f"level {counts.key.condition!r}: need >= 2 distinct cost values")
        slope = np.polyfit(x, y, 1)[0]
        out.append((counts.key.condition, float(slope)))
    return out
