"""Error-cost (distortion) matrices.

Every CostMatrix is stored in canonical form: zero diagonal, nonnegative
off-diagonal entries whose mean is exactly 1. Fixing the scale here removes
the temperature/scale degeneracy from the cost geometry itself; temperature
lives in the inverse-temperature parameter of the solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import LabelSet


def offdiag_mask(k: int) -> np.ndarray:
    return ~np.eye(k, dtype=bool)


def normalize_cost(mat: np.ndarray) -> np.ndarray:
    """Zero the diagonal and rescale so the off-diagonal mean is 1."""
    mat = np.array(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("cost matrix must be square")
    if (mat < 0).any():
        raise ValueError("cost entries must be nonnegative")
    np.fill_diagonal(mat, 0.0)
    mask = offdiag_mask(mat.shape[0])
    mean = mat[mask].mean()
    if mean <= 0:
        raise ValueError("cost matrix has no positive off-diagonal mass")
    return mat / mean


@dataclass
class CostMatrix:
    """Nonnegative K x K distortion geometry, zero diagonal, unit off-diag mean."""

    rho: np.ndarray
    label_set: LabelSet

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.float64)
        k = self.label_set.k
        if self.rho.shape != (k, k):
            raise ValueError(f"cost shape {self.rho.shape} does not match K={k}")
        if (self.rho < 0).any():
            raise ValueError("cost entries must be nonnegative")
        if np.abs(np.diag(self.rho)).max() > 0:
            raise ValueError("cost diagonal must be zero")
        mean = self.rho[offdiag_mask(k)].mean()
        if abs(mean - 1.0) > 1e-9:
            raise ValueError(f"off-diagonal mean must be 1, got {mean}")

    @property
    def k(self) -> int:
        return self.label_set.k

    def offdiag(self) -> np.ndarray:
        return self.rho[offdiag_mask(self.k)]


def zero_one_cost(label_set: LabelSet) -> CostMatrix:
    """0-1 (Hamming) cost: every confusion costs 1, correct responses 0."""
    k = label_set.k
    rho = np.ones((k, k)) - np.eye(k)
    return CostMatrix(rho, label_set)


def cost_from_matrix(mat: np.ndarray, label_set: LabelSet) -> CostMatrix:
    """Canonicalize an arbitrary nonnegative matrix into a CostMatrix."""
    return CostMatrix(normalize_cost(mat), label_set)


def random_cost_matrix(label_set: LabelSet, seed: int,
                       low: float = 0.2, high: float = 2.0) -> CostMatrix:
    """Random normalized cost: off-diagonals uniform in [low, high], then scaled."""
    k = label_set.k
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    mat = rng.uniform(low, high, size=(k, k))
    np.fill_diagonal(mat, 0.0)
    return cost_from_matrix(mat, label_set)


def generic_labels(k: int) -> LabelSet:
    """Placeholder class names c00..c{k-1} for synthetic work."""
    return LabelSet([f"c{i:02d}" for i in range(k)])
