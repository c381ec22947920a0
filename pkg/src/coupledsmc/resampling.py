"""Drawing coupled ancestor vectors from a coupling matrix.

Both schemes walk a fixed deterministic ordering of the coupling's entries:
row-major for dense storage, (row, col) lexicographic for sparse storage.
Multinomial consumes one uniform per ancestor pair; systematic consumes a
single uniform for the whole vector, so any run is reproducible from its
seed by counting draws.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simplex import Coupling


@dataclass(frozen=True)
class AncestorPair:
    """Ancestor index vectors for the two particle systems (0-based)."""

    a1: np.ndarray
    a2: np.ndarray

    def __post_init__(self):
        if self.a1.shape != self.a2.shape:
            raise ValueError("ancestor vectors must have equal length")


def entry_ordering(coupling: Coupling) -> np.ndarray:
    """The deterministic (row, col) enumeration the resamplers walk, shape (M, 2)."""
    if coupling.is_sparse:
        m = coupling.matrix
        m.sort_indices()
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        return np.column_stack([rows, m.indices])
    n = coupling.n
    grid = np.indices((n, n)).reshape(2, -1).T
    return grid


def _cumulative(coupling: Coupling):
    """Cumulative masses along the entry ordering plus an index-to-pair map."""
    if coupling.is_sparse:
        m = coupling.matrix
        m.sort_indices()
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        cols = m.indices
        cum = np.cumsum(m.data)

        def to_pair(flat):
            return rows[flat], cols[flat]
    else:
        mat = np.asarray(coupling.matrix)
        n = mat.shape[0]
        cum = np.cumsum(mat.ravel())

        def to_pair(flat):
            return np.divmod(flat, n)
    return cum, to_pair


def multinomial_resample(coupling: Coupling, rng: np.random.Generator) -> AncestorPair:
    """N i.i.d. ancestor pairs from the coupling, by inverse CDF over the entries."""
    n = coupling.n
    cum, to_pair = _cumulative(coupling)
    flat = np.searchsorted(cum, rng.random(n), side="right")
    flat = np.minimum(flat, cum.size - 1)
    a1, a2 = to_pair(flat)
    return AncestorPair(np.asarray(a1, dtype=np.intp), np.asarray(a2, dtype=np.intp))


def systematic_resample(coupling: Coupling, u: float) -> AncestorPair:
    """Stratified ancestor pairs driven by one shared uniform.

    Stratum k picks the first entry whose cumulative mass reaches
    (u + k) / N; deterministic given (coupling, u).
    """
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    n = coupling.n
    cum, to_pair = _cumulative(coupling)
    targets = (u + np.arange(n)) / n
    flat = np.searchsorted(cum, targets, side="left")
    flat = np.minimum(flat, cum.size - 1)
    a1, a2 = to_pair(flat)
    return AncestorPair(np.asarray(a1, dtype=np.intp), np.asarray(a2, dtype=np.intp))


def systematic_ancestors(weights, u: float) -> np.ndarray:
    """Single-filter systematic resampling: stratum k picks the first index
    whose cumulative weight reaches (u + k) / N."""
    if not 0.0 <= u < 1.0:
        raise ValueError("u must lie in [0, 1)")
    w = np.asarray(weights, dtype=float)
    n = w.size
    cum = np.cumsum(w)
    idx = np.searchsorted(cum, (u + np.arange(n)) / n, side="left")
    return np.minimum(idx, n - 1).astype(np.intp)


def multinomial_ancestors(weights, rng: np.random.Generator) -> np.ndarray:
    """Single-filter multinomial resampling, one uniform per ancestor."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    cum = np.cumsum(w)
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return np.minimum(idx, n - 1).astype(np.intp)
