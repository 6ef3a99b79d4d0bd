"""Block-paired statistics: signed-rank tests, FDR control, fixed effects.

A block is one (experiment, condition) context; systems measured in the
same block are paired. Three levels of comparison:

1. system-vs-system paired Wilcoxon signed-rank across shared blocks, with
   rank-biserial effect sizes and Benjamini-Hochberg q-values within each
   declared test family;
2. family-vs-family contrasts after collapsing each block x family cell to
   its median;
3. block-demeaned fixed-effects regressions plus nested-model F tests for
   interaction terms.

The exact Wilcoxon p-value enumerates sign assignments with mid-ranks held
fixed (a conditional-on-ranks test, computed by dynamic programming over
doubled ranks so tied mid-ranks stay integral). Zero differences are
dropped, not Pratt-ranked.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as sps

EXACT_LIMIT = 25


class DegenerateTestError(ValueError):
    """No usable differences (all zero) or no matched blocks."""


@dataclass(frozen=True, order=True)
class BlockKey:
    experiment: str
    condition: str


@dataclass(frozen=True)
class PairedTestResult:
    n_blocks: int
    delta_median: float
    w_plus: float
    w_minus: float
    p_value: float
    r_rb: float
    q_value: float | None = None
    excluded_blocks: int = 0


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coef: np.ndarray
    stderr: np.ndarray
    p: np.ndarray
    rss: float
    df_resid: int
    n: int
    n_blocks: int


def wilcoxon_signed_rank(diffs, mode: str = "auto"):
    """Two-sided paired signed-rank test; returns (w_plus, w_minus, p).

    Zeros are dropped; absolute values are mid-ranked. Exact enumeration
    when the effective n is at most 25 (or mode='exact'), otherwise a
    normal approximation with continuity correction and tie-corrected
    variance.
    """
    if mode not in ("exact", "normal-approx", "auto"):
        raise ValueError(f"unknown mode {mode!r}")
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateTestError("degenerate: no nonzero differences")
    ranks = sps.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    if mode == "exact" or (mode == "auto" and n <= EXACT_LIMIT):
        p = _exact_two_sided_p(ranks, w_plus)
    else:
        p = _normal_two_sided_p(ranks, w_plus)
    return w_plus, w_minus, min(p, 1.0)


def _exact_two_sided_p(ranks, w_plus):
    """p = 2 * min(P(W+ <= w), P(W+ >= w)) under random signs, ranks fixed.

    Doubled ranks are integers even with .5 mid-ranks, so the distribution
    of 2*W+ is a polynomial product evaluated by dynamic programming; this
    equals full enumeration over the 2^n sign assignments.
    """
    r2 = np.rint(2.0 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    w2 = int(np.rint(2.0 * w_plus))
    denom = counts.sum()
    p_le = counts[: w2 + 1].sum() / denom
    p_ge = counts[w2:].sum() / denom
    return 2.0 * min(p_le, p_ge)


def _normal_two_sided_p(ranks, w_plus):
    n = ranks.size
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= (tie_counts ** 3 - tie_counts).sum() / 48.0
    if var <= 0:
        return 1.0
    dev = w_plus - mean
    z = (dev - 0.5 * np.sign(dev)) / np.sqrt(var)
    return 2.0 * sps.norm.sf(abs(z))


def bh_fdr(p_values):
    """Benjamini-Hochberg step-up q-values, in the input order."""
    p = np.asarray(p_values, dtype=np.float64)
    if p.size == 0:
        return np.array([])
    if (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def match_blocks(a: str, b: str, rows: list[dict], metric: str,
                 by: str = "system"):
    """Inner-join metric values of two systems (or families) on BlockKey.

    Rows flagged degenerate or carrying non-finite metric values are
    excluded (counted); multiple instances of one side within a block
    collapse to their median. Returns (paired list of (value_a, value_b),
    n_excluded).
    """
    excluded = 0
    per_side: dict[str, dict[BlockKey, list[float]]] = {a: {}, b: {}}
    for row in rows:
        ident = row[by]
        if ident not in (a, b):
            continue
        val = row.get(metric)
        if row.get("flags") or val is None or not np.isfinite(val):
            excluded += 1
            continue
        key = BlockKey(row["experiment"], row["condition"])
        per_side[ident].setdefault(key, []).append(float(val))
    shared = sorted(set(per_side[a]) & set(per_side[b]))
    if not shared:
        raise DegenerateTestError(f"no matched blocks between {a!r} and {b!r}")
    pairs = [(float(np.median(per_side[a][k])), float(np.median(per_side[b][k])))
             for k in shared]
    return pairs, excluded


def paired_compare(a: str, b: str, metric: str, rows: list[dict],
                   by: str = "system", transform=None,
                   mode: str = "auto") -> PairedTestResult:
    """Within-block a-minus-b contrast with a signed-rank test.

    ``transform`` (e.g. log10 of the magnitude for scale parameters) is
    applied to both sides before differencing. The q-value is left unset;
    assign it across a declared comparison family with ``assign_q``.
    """
    pairs, excluded = match_blocks(a, b, rows, metric, by)
    va = np.array([p[0] for p in pairs])
    vb = np.array([p[1] for p in pairs])
    if transform is not None:
        va, vb = transform(va), transform(vb)
    diffs = va - vb
    w_plus, w_minus, p = wilcoxon_signed_rank(diffs, mode)
    total = w_plus + w_minus
    r_rb = (w_plus - w_minus) / total if total > 0 else 0.0
    return PairedTestResult(n_blocks=len(pairs),
                            delta_median=float(np.median(diffs)),
                            w_plus=w_plus, w_minus=w_minus, p_value=p,
                            r_rb=float(r_rb), excluded_blocks=excluded)


def assign_q(results: list[PairedTestResult]) -> list[PairedTestResult]:
    """BH-FDR across one declared family of paired tests."""
    qs = bh_fdr([r.p_value for r in results])
    return [replace(r, q_value=float(q)) for r, q in zip(results, qs)]


def log10_magnitude(values):
    return np.log10(np.maximum(np.abs(values), 1e-12))


def _demean_within(values, block_ids):
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for b in set(block_ids):
        sel = np.array([bi == b for bi in block_ids])
        out[sel] = values[sel] - values[sel].mean()
    return out


def _design(rows, outcome, predictors, reference_family, interaction=False):
    blocks = [BlockKey(r["experiment"], r["condition"]) for r in rows]
    y = np.array([float(r[outcome]) for r in rows])
    cols, names = [], []
    families = sorted({r["family"] for r in rows})
    if reference_family not in families:
        raise ValueError(f"reference family {reference_family!r} not present")
    acc = None
    if "accuracy" in predictors:
        acc = np.array([float(r["accuracy"]) for r in rows])
        cols.append(acc)
        names.append("accuracy")
    if "family" in predictors:
        for fam in families:
            if fam == reference_family:
                continue
            dummy = np.array([1.0 if r["family"] == fam else 0.0 for r in rows])
            cols.append(dummy)
            names.append(f"family[{fam}]")
            if interaction:
                if acc is None:
                    raise ValueError("interaction requires an accuracy predictor")
                cols.append(acc * dummy)
                names.append(f"accuracy:family[{fam}]")
    x = np.column_stack(cols)
    return y, x, names, blocks


def _within_ols(y, x, names, blocks):
    n_blocks = len(set(blocks))
    if n_blocks < 2:
        raise ValueError("need >= 2 blocks to absorb block effects")
    counts = {}
    for b in blocks:
        counts[b] = counts.get(b, 0) + 1
    if min(counts.values()) < 2:
        raise ValueError("every block needs >= 2 rows")
    yd = _demean_within(y, blocks)
    xd = np.column_stack([_demean_within(x[:, j], blocks) for j in range(x.shape[1])])
    rank = np.linalg.matrix_rank(xd)
    if rank < xd.shape[1]:
        bad = _collinear_columns(xd, names)
        raise ValueError(f"rank-deficient design after demeaning: {', '.join(bad)}")
    coef, _, _, _ = np.linalg.lstsq(xd, yd, rcond=None)
    resid = yd - xd @ coef
    rss = float(resid @ resid)
    df_resid = len(y) - n_blocks - xd.shape[1]
    if df_resid <= 0:
        raise ValueError("no residual degrees of freedom")
    sigma2 = rss / df_resid
    xtx_inv = np.linalg.inv(xd.T @ xd)
    stderr = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    safe = np.where(stderr > 0, stderr, 1.0)
    tvals = np.where(stderr > 0, coef / safe,
                     np.where(coef == 0.0, 0.0, np.inf))
    p = 2.0 * sps.t.sf(np.abs(tvals), df_resid)
    return coef, stderr, p, rss, df_resid, n_blocks


def _collinear_columns(xd, names):
    bad = []
    kept = []
    for j in range(xd.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(xd[:, trial]) < len(trial):
            bad.append(names[j])
        else:
            kept.append(j)
    return bad or list(names)


def fe_regression(rows: list[dict], outcome: str,
                  predictors=("accuracy", "family"),
                  reference_family: str = "humans") -> RegressionResult:
    """Block fixed-effects OLS via within-block demeaning.

    Coefficients equal those of OLS with explicit block dummies; residual
    degrees of freedom subtract the absorbed block count. Standard errors
    are homoskedastic.
    """
    y, x, names, blocks = _design(rows, outcome, predictors, reference_family)
    coef, stderr, p, rss, df_resid, n_blocks = _within_ols(y, x, names, blocks)
    return RegressionResult(names=tuple(names), coef=coef, stderr=stderr, p=p,
                            rss=rss, df_resid=df_resid, n=len(y),
                            n_blocks=n_blocks)


def nested_interaction_test(rows: list[dict], outcome: str,
                            reference_family: str = "humans"):
    """F test of accuracy x family interaction against the additive model.

    Both models share the same rows and block demeaning; returns
    (f_stat, p_value, df_num, df_den).
    """
    y, x_r, names_r, blocks = _design(rows, outcome, ("accuracy", "family"),
                                      reference_family)
    _, x_f, names_f, _ = _design(rows, outcome, ("accuracy", "family"),
                                 reference_family, interaction=True)
    *_, rss_r, _, _ = _within_ols(y, x_r, names_r, blocks)
    *_, rss_f, df_f, _ = _within_ols(y, x_f, names_f, blocks)
    df_num = x_f.shape[1] - x_r.shape[1]
    if df_num <= 0:
        raise ValueError("full model adds no parameters")
    f_stat = ((rss_r - rss_f) / df_num) / (rss_f / df_f)
    p = float(sps.f.sf(f_stat, df_num, df_f))
    return float(f_stat), p, df_num, df_f
