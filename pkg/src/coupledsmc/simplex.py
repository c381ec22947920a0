"""Weight vectors on the probability simplex and their closed-form couplings.

A weight vector is a plain 1-d float array that is nonnegative and sums to
one.  A coupling of two such vectors is a nonnegative matrix whose row sums
reproduce the first vector and whose column sums reproduce the second: rows
index ancestors of the first particle system, columns ancestors of the
second.  That orientation is fixed here and relied on everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import DegenerateWeightsError

# Tolerances sized for double-precision accumulation at N ~ 1e5.
MARGINAL_ATOL = 1e-8
MASS_ATOL = 1e-10


@dataclass
class Coupling:
    """Joint resampling distribution over ancestor index pairs.

    ``matrix`` is either a dense (N, N) array or a CSR matrix whose stored
    entries (including explicit zeros) define the admissible support.
    """

    matrix: np.ndarray | sparse.csr_matrix
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    converged: bool = True
    fallback: bool = False
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sparse.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def trace(self) -> float:
        """Probability that the two sampled ancestors coincide."""
        if self.is_sparse:
            return float(self.matrix.diagonal().sum())
        return float(np.trace(self.matrix))

    def transport_cost(self, cost) -> float:
        """Frobenius inner product with a cost matrix of matching storage."""
        if self.is_sparse:
            data = cost.data if sparse.issparse(cost) else None
            if data is None:
                raise ValueError("sparse coupling needs a sparse cost with identical support")
            return float(np.dot(self.matrix.data, data))
        return float(np.sum(self.toarray() * np.asarray(cost)))

    def validate(self, marginal_atol: float = MARGINAL_ATOL, mass_atol: float = MASS_ATOL) -> None:
        """Raise ValueError unless entries, marginals and total mass are coherent."""
        dense_like = self.matrix.data if self.is_sparse else self.matrix
        if np.any(np.asarray(dense_like) < 0):
            raise ValueError("coupling has negative entries")
        rows = np.asarray(self.matrix.sum(axis=1)).ravel()
        cols = np.asarray(self.matrix.sum(axis=0)).ravel()
        if np.max(np.abs(rows - self.row_marginal)) > marginal_atol:
            raise ValueError("row sums do not match the row marginal")
        if np.max(np.abs(cols - self.col_marginal)) > marginal_atol:
            raise ValueError("column sums do not match the column marginal")
        if abs(rows.sum() - 1.0) > mass_atol:
            raise ValueError("total mass is not 1")


def normalize(raw) -> np.ndarray:
    """Scale a nonnegative vector to sum to one.

    Raises
    ------
    DegenerateWeightsError
        If the input contains NaNs or negatives, or sums to zero (total
        particle-weight collapse).
    """
    w = np.asarray(raw, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise DegenerateWeightsError("degenerate weights: need a nonempty 1-d vector")
    if np.any(np.isnan(w)) or np.any(w < 0):
        raise DegenerateWeightsError("degenerate weights: NaN or negative entries")
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError("degenerate weights: total weight is zero or non-finite")
    return w / total


def ess(w) -> float:
    """Effective sample size 1 / sum(w_i^2), between 1 and len(w)."""
    w = np.asarray(w, dtype=float)
    return float(1.0 / np.dot(w, w))


def tv_distance(a, b) -> float:
    """Total-variation distance (1/2) sum |a_i - b_i| between two weight vectors."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("weight vectors have different lengths")
    return float(0.5 * np.sum(np.abs(a - b)))


def independent_coupling(a, b) -> Coupling:
    """Product coupling: ancestors drawn independently from each marginal."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("weight vectors have different lengths")
    return Coupling(np.outer(a, b), a, b)


def maximal_coupling(a, b) -> Coupling:
    """Coupling maximizing the coincidence probability of the two ancestors.

    The overlap min(a, b) sits on the diagonal; the residual mass couples the
    two normalized residual distributions as a product.  The trace equals
    1 - tv_distance(a, b), which no other coupling can exceed.  When the
    marginals coincide the result is purely diagonal; when they are mutually
    singular it degenerates to the independent coupling.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("weight vectors have different lengths")
    overlap = np.minimum(a, b)
    residual = 1.0 - overlap.sum()
    matrix = np.diag(overlap)
    if residual > 0.0:
        r1 = np.clip(a - overlap, 0.0, None)
        r2 = np.clip(b - overlap, 0.0, None)
        matrix += np.outer(r1, r2) / residual
    return Coupling(matrix, a, b)
