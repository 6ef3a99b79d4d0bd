"""MAP inference of the latent error-cost geometry from confusion counts.

The free parameters are the K(K-1) off-diagonal cost cells in an
unconstrained vector theta. Decoding applies a softplus for positivity and
caps entries at RHO_CAP (perfect-accuracy data otherwise pushes the scale to
infinity; the cap makes that case a defined answer). The solver runs at
inverse temperature 1 on the *raw* decode, so the raw off-diagonal scale
plays the role of the data's effective temperature and is identified by the
likelihood; the returned CostMatrix is the scale-normalized shape together
with the fitted scale.

The structured prior penalizes the symmetric and antisymmetric parts of the
raw decode: 0.5 * tau_sym ||S||_F^2 + 0.5 * tau_asym ||A||_F^2 with
S = (rho + rho^T)/2 and A = (rho - rho^T)/2 restricted to off-diagonal
cells. Gradients are central finite differences; correctness over speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .channel import channel_from_counts, smooth_counts
from .costs import CostMatrix, cost_from_matrix, offdiag_mask
from .ingest import ConfusionCounts
from .solver import BASettings
from . import _kernels

RHO_CAP = 50.0
BA_PENALTY = 1e12
LOGQ_FLOOR = 1e-300

INFERENCE_BA = BASettings(max_iters=200_000, tol=1e-12)


@dataclass(frozen=True)
class PriorConfig:
    """Gaussian precisions on cost components; tau_diag reserved (diagonal fixed at 0)."""

    tau_sym: float = 1.0
    tau_asym: float = 10.0
    tau_diag: float = 0.0

    def __post_init__(self):
        if self.tau_sym < 0 or self.tau_asym < 0 or self.tau_diag < 0:
            raise ValueError("precisions must be nonnegative")


@dataclass(frozen=True)
class OptimizerSettings:
    gtol: float = 1e-5
    ftol: float = 1e-9
    maxiter: int = 300
    fd_step: float = 1e-4
    ba: BASettings = INFERENCE_BA


@dataclass
class FitResult:
    rho_map: CostMatrix
    scale: float
    log_posterior: float
    converged: bool
    iters: int
    theta_map: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    stderr: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    def rho_raw(self) -> np.ndarray:
        """The pre-normalization decode: scale times the normalized shape."""
        return self.scale * self.rho_map.rho


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(divide="ignore"):
        small = np.log(np.expm1(np.minimum(y, 30.0)))
    return np.where(y > 30.0, y, small)


def decode_theta(theta, k):
    """theta -> raw cost matrix (softplus, capped, zero diagonal)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (k * (k - 1),):
        raise ValueError(f"theta must have {k * (k - 1)} entries, got {theta.shape}")
    raw = np.zeros((k, k))
    raw[offdiag_mask(k)] = np.minimum(softplus(theta), RHO_CAP)
    return raw


def encode_rho(raw, k):
    """Inverse of decode_theta for entries below the cap."""
    vals = np.asarray(raw, dtype=np.float64)[offdiag_mask(k)]
    return softplus_inv(np.minimum(vals, RHO_CAP))


def _prior_penalty(raw, prior: PriorConfig, k):
    mask = offdiag_mask(k)
    sym = 0.5 * (raw + raw.T)
    asym = 0.5 * (raw - raw.T)
    return (0.5 * prior.tau_sym * (sym[mask] ** 2).sum()
            + 0.5 * prior.tau_asym * (asym[mask] ** 2).sum())


def _empirical_prior(counts: ConfusionCounts):
    row_sums = counts.counts.sum(axis=1).astype(np.float64)
    total = row_sums.sum()
    if total <= 0:
        raise ValueError("counts have no trials")
    return row_sums / total


def neg_log_posterior(theta, counts: ConfusionCounts, prior: PriorConfig = PriorConfig(),
                      settings: BASettings = INFERENCE_BA, flags: list = None) -> float:
    """Negative log posterior of the raw decode of theta, up to a constant.

    Solves the optimal channel at inverse temperature 1 for the decoded raw
    cost and scores the observed counts against it (multinomial terms
    constant in theta are dropped). Solver non-convergence returns a large
    penalty so line searches back away; the event is appended to ``flags``
    when a list is passed.
    """
    k = counts.label_set.k
    raw = decode_theta(theta, k)
    p = _empirical_prior(counts)
    q0 = np.full(k, 1.0 / k)
    cond, q, iters, resid = _kernels.ba_fixed_point(
        -raw, p, q0, settings.max_iters, settings.tol, settings.damping)
    if resid > settings.tol:
        if flags is not None:
            flags.append("ba_nonconverged")
        return BA_PENALTY
    n = counts.counts
    loglik = float((n * np.log(np.maximum(cond, LOGQ_FLOOR))).sum())
    return -loglik + _prior_penalty(raw, prior, k)


def _fd_gradient(fun, x, step):
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        g[i] = (fun(xp) - fun(xm)) / (2.0 * step)
    return g


def _initial_thetas(counts: ConfusionCounts):
    """Two starts: the 0-1 cost and the -log smoothed-confusion shape."""
    k = counts.label_set.k
    mask = offdiag_mask(k)
    ones = np.ones((k, k)) - np.eye(k)
    starts = [ones]
    ch = smooth_counts(counts, alpha=0.5)
    neglog = -np.log(np.maximum(ch.cond, 1e-12))
    np.fill_diagonal(neglog, 0.0)
    neglog = np.maximum(neglog, 1e-3)
    shape = neglog / neglog[mask].mean()
    starts.append(shape)
    return [softplus_inv(np.maximum(s[mask], 1e-3)) for s in starts]


def fit_cost_matrix(counts: ConfusionCounts, prior: PriorConfig = PriorConfig(),
                    opt: OptimizerSettings = OptimizerSettings()) -> FitResult:
    """MAP cost matrix by multi-start quasi-Newton over FD gradients.

    The better of the two standard starts wins. ``converged`` reflects the
    optimizer's own criteria: projected-gradient sup-norm <= gtol or
    relative objective decrease <= ftol.
    """
    supported = (counts.counts.sum(axis=1) > 0).sum()
    if supported < 2:
        raise ValueError(f"need >= 2 supported rows, got {supported}")
    if counts.total < counts.label_set.k:
        raise ValueError(
            f"need at least K={counts.label_set.k} trials, got {counts.total}")

    fun = lambda th: neg_log_posterior(th, counts, prior, opt.ba)
    jac = lambda th: _fd_gradient(fun, th, opt.fd_step)
    options = {"maxiter": opt.maxiter, "ftol": opt.ftol, "gtol": opt.gtol,
               "maxfun": 100 * opt.maxiter}

    best = None
    for theta0 in _initial_thetas(counts):
        trace = [fun(theta0)]
        res = minimize(fun, theta0, jac=jac, method="L-BFGS-B",
                       callback=lambda th: trace.append(fun(th)),
                       options=options)
        total_nit = res.nit
        # line searches abort on FD noise in flat directions; restarting
        # resets the quasi-Newton memory and usually resumes the descent
        while (not res.success and total_nit < opt.maxiter
               and res.nit > 0):
            prev_fun = res.fun
            res = minimize(fun, res.x, jac=jac, method="L-BFGS-B",
                           callback=lambda th: trace.append(fun(th)),
                           options=options)
            total_nit += res.nit
            if prev_fun - res.fun <= opt.ftol * max(1.0, abs(res.fun)):
                break
        ok = _converged(res, trace, fun, jac, opt)
        if best is None or res.fun < best[0]:
            best = (float(res.fun), res.x.copy(), ok, int(total_nit), trace)

    obj, theta, ok, nit, trace = best
    k = counts.label_set.k
    # flags describe the returned point, not line-search excursions
    flags: list[str] = []
    neg_log_posterior(theta, counts, prior, opt.ba, flags)
    raw = decode_theta(theta, k)
    if (raw >= RHO_CAP).any():
        flags.append("scale_cap_hit")
    scale = raw[offdiag_mask(k)].mean()
    rho_map = cost_from_matrix(raw, counts.label_set)
    return FitResult(rho_map=rho_map, scale=float(scale), log_posterior=-obj,
                     converged=ok, iters=nit, theta_map=theta,
                     objective_trace=trace, stderr=None,
                     flags=tuple(dict.fromkeys(flags)))


def _converged(res, trace, fun, jac, opt: OptimizerSettings) -> bool:
    """Converged when the run achieved a small projected gradient or a
    small relative objective change."""
    if res.success:
        return True
    if len(trace) >= 2:
        a, b = trace[-2], trace[-1]
        if abs(a - b) <= opt.ftol * max(1.0, abs(a), abs(b)):
            return True
    return bool(np.abs(jac(res.x)).max() <= opt.gtol)


def _fd_hessian(fun, x, step):
    p = x.size
    h = np.empty((p, p))
    f0 = fun(x)
    for i in range(p):
        xp = x.copy(); xp[i] += step
        xm = x.copy(); xm[i] -= step
        h[i, i] = (fun(xp) - 2.0 * f0 + fun(xm)) / step ** 2
    for i in range(p):
        for j in range(i + 1, p):
            xpp = x.copy(); xpp[i] += step; xpp[j] += step
            xpm = x.copy(); xpm[i] += step; xpm[j] -= step
            xmp = x.copy(); xmp[i] -= step; xmp[j] += step
            xmm = x.copy(); xmm[i] -= step; xmm[j] -= step
            h[i, j] = h[j, i] = (fun(xpp) - fun(xpm) - fun(xmp) + fun(xmm)) / (4.0 * step ** 2)
    return h


def _stderr_from_hessian(hess, theta, k):
    """Per-parameter standard errors in raw cost units, or None if not PD."""
    try:
        np.linalg.cholesky(hess)
    except np.linalg.LinAlgError:
        return None
    cov = np.linalg.inv(hess)
    diag = np.diag(cov)
    if (diag <= 0).any():
        return None
    se_theta = np.sqrt(diag)
    jacobian = _decode_jacobian(theta)
    out = np.zeros((k, k))
    out[offdiag_mask(k)] = jacobian * se_theta
    return out


def _decode_jacobian(theta):
    # d/dtheta of min(softplus(theta), cap): sigmoid below the cap, 0 above
    sp = softplus(theta)
    sig = 1.0 / (1.0 + np.exp(-theta))
    return np.where(sp < RHO_CAP, sig, 0.0)


def laplace_stderr(fit: FitResult, counts: ConfusionCounts,
                   prior: PriorConfig = PriorConfig(),
                   settings: BASettings = INFERENCE_BA,
                   step: float = 1e-3) -> np.ndarray | None:
    """Local-Gaussian standard errors at the MAP via an FD Hessian.

    Returns a K x K matrix (zero diagonal) in raw cost units, or None with a
    'hessian_not_pd' flag on the fit when the Hessian is not positive
    definite (for example when the optimizer was stopped early).
    """
    k = counts.label_set.k
    fun = lambda th: neg_log_posterior(th, counts, prior, settings)
    hess = _fd_hessian(fun, fit.theta_map, step)
    out = _stderr_from_hessian(hess, fit.theta_map, k)
    if out is None:
        fit.flags = tuple(dict.fromkeys(fit.flags + ("hessian_not_pd",)))
        fit.stderr = None
        return None
    fit.stderr = out
    return out
