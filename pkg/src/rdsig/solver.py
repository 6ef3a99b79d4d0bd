"""Optimal-channel solver and discrete frontier tracing.

At inverse temperature lambda the optimal channel has the Boltzmann form
q(y|x) proportional to q(y) exp(-lambda rho(x, y)); alternating the marginal
and conditional updates converges to the fixed point. Sweeping lambda over a
log-spaced grid traces (distortion, rate) frontier points.

Only the product lambda * rho matters, so scaling the cost by c and dividing
lambda by c gives the identical channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import LOG2, Channel
from .costs import CostMatrix
from .ingest import LabelSet

# Near-duplicate distortion gap, relative to the traced distortion range.
# Converged points closer than this are one frontier point blurred by solver
# round-off; finite differences across such gaps are pure noise.
DEDUP_RTOL = 1e-7

DEFAULT_GRID_LO = 1e-2
DEFAULT_GRID_HI = 1e3
DEFAULT_GRID_N = 64


@dataclass(frozen=True)
class BASettings:
    """Fixed-point iteration controls; tol is the sup-norm step in q(y)."""

    max_iters: int = 5000
    tol: float = 1e-10
    damping: float = 0.0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must be in [0, 1)")


@dataclass
class RDPoint:
    lam: float
    rate: float
    distortion: float
    channel: Channel
    converged: bool
    iters: int


@dataclass
class RDCurve:
    """Frontier points sorted by increasing distortion, duplicates collapsed."""

    points: list[RDPoint]
    rho: CostMatrix
    prior: np.ndarray

    def distortions(self) -> np.ndarray:
        return np.array([p.distortion for p in self.points])

    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points])

    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def all_converged(self) -> bool:
        return all(p.converged for p in self.points)


def lambda_grid(lo: float, hi: float, n: int) -> np.ndarray:
    """n log10-equispaced inverse temperatures, endpoints inclusive."""
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if n < 2:
        raise ValueError(f"need n >= 2 grid points, got {n}")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def default_grid() -> np.ndarray:
    return lambda_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_N)


def _as_rho_array(rho) -> np.ndarray:
    return np.asarray(getattr(rho, "rho", rho), dtype=np.float64)


def _check_prior(prior, k) -> np.ndarray:
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (k,):
        raise ValueError(f"prior length {prior.shape} does not match K={k}")
    if (prior < 0).any():
        raise ValueError("prior entries must be nonnegative")
    total = prior.sum()
    if total <= 0:
        raise ValueError("prior has zero total mass")
    return prior / total


def _rate_bits(cond, prior, q):
    rows = prior > 0
    sub = cond[rows]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(sub) - np.log(q)[None, :]
        terms = np.where(sub > 0, sub * ratio, 0.0)
    return float(prior[rows] @ terms.sum(axis=1) / LOG2)


def ba_optimal_channel(rho, prior, lam: float,
                       settings: BASettings = BASettings(),
                       label_set: LabelSet = None,
                       q_init: np.ndarray = None) -> RDPoint:
    """Solve for the optimal channel at one inverse temperature.

    Parameters
    ----------
    rho : CostMatrix or (K, K) array
        Distortion geometry (need not be normalized; only lam*rho matters).
    prior : (K,) array
        Source distribution; zero entries drop those rows from the rate and
        distortion but the channel row is still produced.
    lam : float
        Inverse temperature, > 0.
    settings : BASettings
    label_set : LabelSet, optional
        Defaults to the cost matrix's labels when rho is a CostMatrix.
    q_init : array, optional
        Warm-start output marginal (used by trace_curve).

    Returns
    -------
    RDPoint with rate in bits and distortion in rho units. converged=False
    means max_iters was hit; the best iterate is still returned.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    mat = _as_rho_array(rho)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("cost matrix must be square")
    if (mat < 0).any():
        raise ValueError("cost entries must be nonnegative")
    k = mat.shape[0]
    prior = _check_prior(prior, k)
    if label_set is None:
        label_set = getattr(rho, "label_set", None)
    if label_set is None:
        from .costs import generic_labels
        label_set = generic_labels(k)

    if q_init is None:
        q0 = np.full(k, 1.0 / k)
    else:
        q0 = np.asarray(q_init, dtype=np.float64)
        q0 = q0 / q0.sum()

    log_w = -lam * mat
    cond, q, iters, resid = _kernels.ba_fixed_point(
        log_w, prior, q0, settings.max_iters, settings.tol, settings.damping)

    rate = _rate_bits(cond, prior, q)
    distortion = float(prior @ (cond * mat).sum(axis=1))
    channel = Channel(cond, prior, label_set, support=np.ones(k, dtype=bool))
    return RDPoint(lam=float(lam), rate=max(rate, 0.0), distortion=distortion,
                   channel=channel, converged=resid <= settings.tol, iters=iters)


def trace_curve(rho, prior, grid, settings: BASettings = BASettings(),
                warm_start: bool = True, label_set: LabelSet = None) -> RDCurve:
    """Trace frontier points over a lambda grid.

    Each solve warm-starts from the previous lambda's marginal (disable with
    warm_start=False; converged answers agree either way to solver
    tolerance). Points are sorted by distortion; duplicate distortion values
    collapse keeping the higher rate, which preserves the Pareto point.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must hold at least 2 lambda values")
    if (grid <= 0).any() or not np.isfinite(grid).all():
        raise ValueError("all lambda values must be positive and finite")

    mat = _as_rho_array(rho)
    prior = _check_prior(prior, mat.shape[0])
    points = []
    q_prev = None
    k = mat.shape[0]
    # Solve from high lambda downward (descending distortion demand) and keep
    # warm starts strictly interior: a zeroed q(y) entry is absorbing in the
    # multiplicative update, and the optimal output support is not nested
    # along the grid, so a collapsed start can converge to an off-frontier
    # fixed point. Mixing in a uniform floor restores interior starts, from
    # which the iteration reaches the global optimum.
    floor = 1e-6
    for lam in sorted(grid, reverse=True):
        if warm_start and q_prev is not None:
            q0 = (1.0 - floor) * q_prev + floor / k
        else:
            q0 = None
        pt = ba_optimal_channel(rho, prior, lam, settings,
                                label_set=label_set, q_init=q0)
        points.append(pt)
        q_prev = pt.channel.output_marginal()

    points.sort(key=lambda p: (p.distortion, -p.rate))
    dvals = np.array([p.distortion for p in points])
    d_range = float(dvals.max() - dvals.min())
    gap = max(DEDUP_RTOL * d_range, 10.0 * settings.tol)
    kept: list[RDPoint] = []
    for pt in points:
        if kept and pt.distortion - kept[-1].distortion <= gap:
            if pt.rate > kept[-1].rate:
                kept[-1] = pt
        else:
            kept.append(pt)
    return RDCurve(points=kept, rho=rho, prior=prior)
