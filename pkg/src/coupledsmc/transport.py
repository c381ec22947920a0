"""Entropic-regularized optimal transport between weighted particle clouds.

The dense solver is the classic alternating-scaling iteration on the kernel
K = exp(-lambda * C); the sparse variant runs the identical iteration with
all matrix-vector products restricted to a fixed support (absent entries are
infinitely costly pairings).  Whatever the convergence quality, the returned
object is a genuine coupling: after the scaling loop the marginals are
polished to feasibility, so downstream resampling never sees an improper
joint distribution.

``exact_ot_small`` solves the underlying linear program outright and exists
purely as a small-instance reference for testing the scaled solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .errors import InfeasibleSupportError, RegularizationError
from .simplex import Coupling, maximal_coupling

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SinkhornConfig:
    """Knobs of the scaling iteration.

    lam : regularization strength (larger = closer to exact transport)
    tol : stop when the relative Euclidean change of the row scaling u drops
          below this
    max_iter : cap on scaling sweeps before giving up on the tol criterion
    """

    lam: float = 50.0
    tol: float = 1e-3
    max_iter: int = 1000

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def sparse_cost(rows, cols, values, n: int) -> sparse.csr_matrix:
    """CSR cost matrix whose stored entries (zeros included) are the support."""
    m = sparse.coo_matrix((np.asarray(values, dtype=float),
                           (np.asarray(rows), np.asarray(cols))), shape=(n, n)).tocsr()
    m.sort_indices()
    return m


# progress guard shared by the scaling loop and the feasibility polish: stop
# once the tracked quantity shrank by less than this factor over the window
# (an infeasible or barely feasible support plateaus; a healthy one contracts).
# Only worth engaging when sweeps are expensive; small instances run their
# full budget, which is what the near-optimality checks rely on.
_STALL_WINDOW = 25
_STALL_FACTOR = 0.9
_STALL_MIN_N = 128

# feasibility-polish sweep budgets: well-conditioned instances reach the
# marginal target in tens of sweeps.  Big problems hand anything slower to
# the exact rounding step instead of burning more matvecs; small ones (where
# a sweep costs microseconds and near-optimality checks live) run long.
_POLISH_CAP_LARGE = 50
_POLISH_CAP_SMALL = 20_000


def _scaling_loop(apply_K, apply_Kt, a, b, cfg: SinkhornConfig, allow_stall: bool):
    """Run u <- a / K[b / (K^T u)] until the relative change of u is small.

    Returns (u, v, converged, iterations, finite) with v = b / (K^T u)
    consistent with the final u.  Exits early when the change norm stops
    contracting (non-convergent instances otherwise burn the whole budget).
    """
    n = a.size
    u = np.full(n, 1.0 / n)
    converged = False
    iterations = 0
    window_norm = np.inf
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for iterations in range(1, cfg.max_iter + 1):
            v = b / apply_Kt(u)
            v = np.where(np.isfinite(v), v, 0.0)
            u_new = a / apply_K(v)
            u_new = np.where(np.isfinite(u_new), u_new, 0.0)
            diff = u_new - u
            ratio = np.divide(diff, u, out=np.zeros_like(u), where=u != 0.0)
            u = u_new
            if not np.all(np.isfinite(u)):
                return u, u, False, iterations, False
            norm = float(np.linalg.norm(ratio))
            if norm <= cfg.tol:
                converged = True
                break
            if allow_stall and iterations % _STALL_WINDOW == 0:
                if norm > _STALL_FACTOR * window_norm:
                    break
                window_norm = norm
        v = b / apply_Kt(u)
        v = np.where(np.isfinite(v), v, 0.0)
    return u, v, converged, iterations, bool(np.all(np.isfinite(v)))


def _marginal_target(n: int) -> float:
    return max(1e-11, 4.0 * n * _EPS)


def _polish(apply_K, apply_Kt, a, b, u, v, max_sweeps: int, allow_stall: bool):
    """Extra scaling sweeps until row sums match ``a`` to near machine level.

    Column sums are exact after each v-update by construction; on a feasible
    support the row error contracts to zero, at which point the output is a
    valid coupling without any additive correction.  Stalled instances stop
    early and are repaired by rounding instead.
    """
    target = _marginal_target(a.size)
    window_err = np.inf
    err = np.inf
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for sweep in range(1, max_sweeps + 1):
            row = u * apply_K(v)
            err = float(np.max(np.abs(row - a)))
            if err <= target or not np.isfinite(err):
                break
            if allow_stall and sweep % _STALL_WINDOW == 0:
                if err > _STALL_FACTOR * window_err:
                    break
                window_err = err
            u = a / apply_K(v)
            u = np.where(np.isfinite(u), u, 0.0)
            v = b / apply_Kt(u)
            v = np.where(np.isfinite(v), v, 0.0)
        row = u * apply_K(v)
        err = float(np.max(np.abs(row - a)))
    ok = np.isfinite(err) and err <= target and np.all(np.isfinite(u)) and np.all(np.isfinite(v))
    return u, v, bool(ok)


def _round_to_feasible(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Project a nonnegative matrix onto the coupling polytope of (a, b).

    Scales overfull rows and columns down, then tops the deficits up with a
    rank-one nonnegative term; marginals come out exact.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = P.sum(axis=1)
        P = P * np.minimum(1.0, np.divide(a, r, out=np.ones_like(a), where=r > 0))[:, None]
        c = P.sum(axis=0)
        P = P * np.minimum(1.0, np.divide(b, c, out=np.ones_like(b), where=c > 0))[None, :]
    err_a = np.clip(a - P.sum(axis=1), 0.0, None)
    err_b = np.clip(b - P.sum(axis=0), 0.0, None)
    mass = err_a.sum()
    if mass > 0:
        P = P + np.outer(err_a, err_b) / mass
    return P


def _round_sparse_to_feasible(P: sparse.csr_matrix, a: np.ndarray,
                              b: np.ndarray) -> sparse.csr_matrix:
    """Sparse analogue of :func:`_round_to_feasible`.

    The scale-down passes stay on the stored support; the rank-one top-up
    joins the support as new entries restricted to the rows and columns that
    actually carry a deficit, so a nearly feasible input gains almost
    nothing and only a badly truncated one densifies.
    """
    n = a.size
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.asarray(P.sum(axis=1)).ravel()
        scale_r = np.minimum(1.0, np.divide(a, r, out=np.ones_like(a), where=r > 0))
        rows = np.repeat(np.arange(n), np.diff(P.indptr))
        data = P.data * scale_r[rows]
        c = np.bincount(P.indices, weights=data, minlength=n)
        scale_c = np.minimum(1.0, np.divide(b, c, out=np.ones_like(b), where=c > 0))
        data = data * scale_c[P.indices]
    err_a = np.clip(a - np.bincount(rows, weights=data, minlength=n), 0.0, None)
    err_b = np.clip(b - np.bincount(P.indices, weights=data, minlength=n), 0.0, None)
    mass = err_a.sum()
    scaled = sparse.csr_matrix((data, P.indices.copy(), P.indptr.copy()), shape=(n, n))
    if mass <= 0:
        scaled.sort_indices()
        return scaled
    ia = np.flatnonzero(err_a)
    ib = np.flatnonzero(err_b)
    top_rows = np.repeat(ia, ib.size)
    top_cols = np.tile(ib, ia.size)
    top_vals = (np.outer(err_a[ia], err_b[ib]) / mass).ravel()
    out = (scaled + sparse.coo_matrix((top_vals, (top_rows, top_cols)),
                                      shape=(n, n)).tocsr()).tocsr()
    out.sort_indices()
    return out


def sinkhorn(cost, a, b, cfg: SinkhornConfig = SinkhornConfig()) -> Coupling:
    """Approximate optimal transport coupling of (a, b) for a dense cost matrix.

    The kernel is built row-stabilized, exp(-lam * (C - rowmin)), which keeps
    every row alive for lam * C far beyond the bare exp underflow point; the
    compensating factors are absorbed by the row scaling.

    Raises
    ------
    RegularizationError
        If a whole kernel column underflows to zero, i.e. lam is too large
        for the cost scale.
    """
    C = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if C.shape != (n, n) or b.size != n:
        raise ValueError("cost must be (N, N) dense with marginals of length N")
    K = np.exp(-cfg.lam * (C - C.min(axis=1)[:, None]))
    if np.any(K.sum(axis=0) == 0.0) or np.any(K.sum(axis=1) == 0.0):
        raise RegularizationError(
            "regularization too strong: kernel has an all-zero row or column; rescale costs")

    apply_K = K.dot
    apply_Kt = K.T.dot
    allow_stall = n > _STALL_MIN_N
    u, v, converged, iterations, finite = _scaling_loop(apply_K, apply_Kt, a, b, cfg,
                                                        allow_stall)
    if not finite:
        raise RegularizationError("regularization too strong: scaling diverged")
    cap = _POLISH_CAP_LARGE if allow_stall else _POLISH_CAP_SMALL
    u, v, feasible = _polish(apply_K, apply_Kt, a, b, u, v, cap, allow_stall)
    P = u[:, None] * K * v[None, :]
    meta = {}
    if not feasible:
        P = _round_to_feasible(np.nan_to_num(P, nan=0.0, posinf=0.0), a, b)
        converged = False
        meta["rounded"] = True
    return Coupling(P, a, b, converged=converged, iterations=iterations, meta=meta)


def sparse_sinkhorn(cost: sparse.csr_matrix, a, b,
                    cfg: SinkhornConfig = SinkhornConfig()) -> Coupling:
    """Scaling iteration restricted to the stored support of a CSR cost matrix.

    With the full support this computes the same coupling as :func:`sinkhorn`.
    If the restricted problem cannot be scaled to feasibility (disconnected or
    badly unbalanced support), the result degrades gracefully to the maximal
    coupling of the marginals, marked with ``fallback=True``.

    Raises
    ------
    InfeasibleSupportError
        If the support has an empty row or column: no coupling exists on it.
    """
    if not sparse.issparse(cost):
        raise ValueError("sparse_sinkhorn needs a CSR cost matrix")
    C = cost.tocsr()
    C.sort_indices()
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if C.shape != (n, n):
        raise ValueError("cost shape does not match the marginals")
    row_counts = np.diff(C.indptr)
    if np.any(row_counts == 0) or np.any(np.bincount(C.indices, minlength=n) == 0):
        raise InfeasibleSupportError("infeasible support: empty row or column")

    entry_rows = np.repeat(np.arange(n), row_counts)
    row_min = np.minimum.reduceat(C.data, C.indptr[:-1])
    kdata = np.exp(-cfg.lam * (C.data - row_min[entry_rows]))
    if np.any(np.bincount(C.indices, weights=kdata, minlength=n) == 0.0):
        return _sparse_fallback(a, b, iterations=0)
    K = sparse.csr_matrix((kdata, C.indices.copy(), C.indptr.copy()), shape=(n, n))
    Kt = K.T.tocsr()

    allow_stall = n > _STALL_MIN_N
    u, v, converged, iterations, finite = _scaling_loop(K.dot, Kt.dot, a, b, cfg, allow_stall)
    if not finite:
        return _sparse_fallback(a, b, iterations)
    cap = _POLISH_CAP_LARGE if allow_stall else _POLISH_CAP_SMALL
    u, v, feasible = _polish(K.dot, Kt.dot, a, b, u, v, cap, allow_stall)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        return _sparse_fallback(a, b, iterations)
    pdata = u[entry_rows] * kdata * v[C.indices]
    P = sparse.csr_matrix((pdata, C.indices.copy(), C.indptr.copy()), shape=(n, n))
    meta = {}
    if not feasible:
        P = _round_sparse_to_feasible(P, a, b)
        converged = False
        meta["rounded"] = True
    return Coupling(P, a, b, converged=converged, iterations=iterations, meta=meta)


def _sparse_fallback(a, b, iterations: int) -> Coupling:
    out = maximal_coupling(a, b)
    out.converged = False
    out.fallback = True
    out.iterations = iterations
    return out


def exact_ot_small(cost, a, b):
    """Exact optimal transport for N <= 16 via a linear-program solve.

    Reference oracle only; returns (coupling, optimal cost <Pi, C>).
    """
    C = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    if n > 16:
        raise ValueError("exact_ot_small is restricted to N <= 16")
    if C.shape != (n, n) or b.size != n:
        raise ValueError("cost must be (N, N) dense with marginals of length N")
    A_eq = np.zeros((2 * n, n * n))
    for i in range(n):
        A_eq[i, i * n:(i + 1) * n] = 1.0          # row sums
        A_eq[n + i, i::n] = 1.0                   # column sums
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]),
                  bounds=(0.0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"exact transport LP failed: {res.message}")
    P = np.clip(res.x.reshape(n, n), 0.0, None)
    return Coupling(P, a, b), float(res.fun)
