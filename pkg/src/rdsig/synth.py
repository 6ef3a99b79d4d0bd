"""Synthetic observers: optimal channels for known cost geometry.

These are the ground-truth generators used by recovery tests: build the
optimal channel for a known (rho*, lambda*), sample multinomial confusion
counts from it, and check that inference gets (rho*, curve geometry) back.

Sampling uses numpy's PCG64 generator seeded per row via
SeedSequence(entropy=(seed, row_index)), so counts are reproducible
cross-platform and rows may be drawn in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Channel
from .costs import CostMatrix
from .ingest import BlockRef, ConfusionCounts
from .solver import BASettings, ba_optimal_channel

GENERATOR_NAME = "numpy-pcg64"

OBSERVER_BA_TOL = 1e-12


@dataclass
class SyntheticObserver:
    rho_true: CostMatrix
    lambda_true: float
    prior: np.ndarray
    channel: Channel
    seed: int


def make_observer(rho: CostMatrix, lam: float, prior, seed: int) -> SyntheticObserver:
    """Optimal channel at (rho, lam) solved to tol 1e-12; errors if unconverged."""
    prior = np.asarray(prior, dtype=np.float64)
    settings = BASettings(max_iters=200_000, tol=OBSERVER_BA_TOL)
    pt = ba_optimal_channel(rho, prior, lam, settings)
    if not pt.converged:
        raise RuntimeError(
            f"observer channel did not converge at lambda={lam} "
            f"(residual after {pt.iters} iterations)")
    return SyntheticObserver(rho_true=rho, lambda_true=float(lam),
                             prior=prior, channel=pt.channel, seed=int(seed))


def sample_counts(obs: SyntheticObserver, trials_per_class: int,
                  key: BlockRef = None) -> ConfusionCounts:
    """Multinomial confusion counts, trials_per_class draws per true class.

    Row i is drawn with the generator seeded from (obs.seed, i), so the same
    observer and seed always produce identical counts.
    """
    if trials_per_class < 1:
        raise ValueError("trials_per_class must be >= 1")
    k = obs.channel.k
    counts = np.zeros((k, k), dtype=np.int64)
    for i in range(k):
        rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=(obs.seed, i))))
        counts[i] = rng.multinomial(trials_per_class, obs.channel.cond[i])
    if key is None:
        key = BlockRef(system=f"synth-{obs.seed}", family="synthetic",
                       experiment="synth", condition="level0")
    return ConfusionCounts(key, counts, obs.channel.label_set)
