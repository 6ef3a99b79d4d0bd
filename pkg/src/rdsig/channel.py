"""Effective behavioral channels built from confusion counts.

A channel is the row-normalized confusion matrix together with a class
prior. Rows whose count total is zero are excluded from the support (the
class was never shown in that condition); information quantities weight
rows by the prior, so unsupported rows contribute nothing.

All reported information is in bits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import ConfusionCounts, LabelSet

LOG2 = np.log(2.0)


@dataclass
class Channel:
    """Row-stochastic conditional p(response j | true i) plus class prior."""

    cond: np.ndarray
    prior: np.ndarray
    label_set: LabelSet
    support: np.ndarray = None
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        self.cond = np.asarray(self.cond, dtype=np.float64)
        self.prior = np.asarray(self.prior, dtype=np.float64)
        if self.support is None:
            self.support = self.cond.sum(axis=1) > 0.5
        self.support = np.asarray(self.support, dtype=bool)
        k = self.label_set.k
        if self.cond.shape != (k, k) or self.prior.shape != (k,):
            raise ValueError("channel dimensions do not match label set")
        rows = self.cond[self.support]
        if rows.size and np.abs(rows.sum(axis=1) - 1.0).max() > 1e-12:
            raise ValueError("supported channel rows must sum to 1")
        if abs(self.prior.sum() - 1.0) > 1e-12 or (self.prior < 0).any():
            raise ValueError("prior must be a probability vector")

    @property
    def k(self) -> int:
        return self.label_set.k

    def accuracy(self) -> float:
        """Prior-weighted probability of responding with the true class."""
        return float(self.prior @ np.diag(self.cond))

    def output_marginal(self) -> np.ndarray:
        return self.prior @ self.cond


@dataclass(frozen=True)
class InfoSummary:
    mutual_information: float
    expected_distortion: float
    accuracy: float


def channel_from_counts(counts: ConfusionCounts, prior_mode: str = "empirical") -> Channel:
    """Row-normalize a confusion matrix into an effective channel.

    Zero-count rows are dropped from the support and the prior. The prior is
    either the empirical row-sum proportion or uniform over supported rows.
    """
    if prior_mode not in ("empirical", "uniform"):
        raise ValueError(f"unknown prior_mode {prior_mode!r}")
    mat = counts.counts.astype(np.float64)
    row_sums = mat.sum(axis=1)
    support = row_sums > 0
    if not support.any():
        raise ValueError("all rows have zero counts; no channel support")
    k = counts.label_set.k
    cond = np.zeros((k, k))
    cond[support] = mat[support] / row_sums[support, None]
    prior = np.zeros(k)
    if prior_mode == "empirical":
        prior[support] = row_sums[support] / row_sums[support].sum()
    else:
        prior[support] = 1.0 / support.sum()
    return Channel(cond, prior, counts.label_set, support=support)


def smooth_counts(counts: ConfusionCounts, alpha: float = 0.5,
                  prior_mode: str = "empirical") -> Channel:
    """Additive-pseudocount channel: row i -> (N_ij + alpha) / sum_j'(N_ij' + alpha).

    With alpha > 0 every row is supported. alpha = 0 falls back to plain
    row normalization; if that drops rows, the channel carries a
    'zero_rows_unsmoothed' advisory flag.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha == 0:
        ch = channel_from_counts(counts, prior_mode)
        if not ch.support.all():
            ch.flags = ch.flags + ("zero_rows_unsmoothed",)
        return ch
    mat = counts.counts.astype(np.float64) + alpha
    row_sums = mat.sum(axis=1)
    cond = mat / row_sums[:, None]
    if prior_mode == "empirical":
        prior = row_sums / row_sums.sum()
    else:
        prior = np.full(counts.label_set.k, 1.0 / counts.label_set.k)
    return Channel(cond, prior, counts.label_set)


def mutual_information(ch: Channel) -> float:
    """I(X;Y) in bits under the channel's prior; 0 log 0 terms contribute 0."""
    p = ch.prior
    rows = p > 0
    sub = ch.cond[rows]
    psub = p[rows]
    q = psub @ sub
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(sub) - np.log(q)[None, :]
        terms = np.where(sub > 0, sub * ratio, 0.0)
    return float(psub @ terms.sum(axis=1) / LOG2)


def expected_distortion(ch: Channel, rho: np.ndarray) -> float:
    """E[rho(X, Y)] under prior and channel."""
    rho = np.asarray(getattr(rho, "rho", rho), dtype=np.float64)
    if rho.shape != ch.cond.shape:
        raise ValueError(
            f"cost matrix shape {rho.shape} does not match channel {ch.cond.shape}")
    return float(ch.prior @ (ch.cond * rho).sum(axis=1))


def summarize(ch: Channel, rho: np.ndarray) -> InfoSummary:
    return InfoSummary(mutual_information(ch), expected_distortion(ch, rho),
                       ch.accuracy())
