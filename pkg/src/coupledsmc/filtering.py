"""Bootstrap particle filter and the generic coupled particle filter.

A model is described algorithmically: an initial sampler, a deterministic
transition map driven by per-particle uniform vectors, and a strictly
positive observation weight evaluated in log space.  Two filters are coupled
by (a) feeding both the identical uniform stream and (b) replacing the two
separate resampling steps with a single draw of ancestor index pairs from a
coupling of the two weight vectors.

Noise can come from a live generator or from a fixed array of Gaussians laid
out positionally; the latter is what pseudo-marginal samplers perturb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ParticleCollapseError, RegularizationError
from .neighbours import symmetric_knn_support
from .resampling import AncestorPair, systematic_resample
from .rng import uniforms_from_gaussians
from .simplex import Coupling, ess, independent_coupling, maximal_coupling
from .transport import SinkhornConfig, sinkhorn, sparse_cost, sparse_sinkhorn

COUPLING_SCHEMES = ("independent", "maximal", "ot-dense", "ot-sparse")


# ---------------------------------------------------------------------------
# model description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Algorithmic state-space model.

    dim : state dimension
    noise_dim : uniforms consumed per particle per step (also by the initial
        sampler)
    initial : (N, noise_dim) uniforms -> (N, dim) states
    transition : (t, states, uniforms) -> states, pure in its arguments
    log_weight : (t, states, observation) -> (N,) log observation weights,
        finite everywhere (weights are strictly positive)
    observations : (T+1, obs_dim) array, one row per time 0..T
    diagnostics : mutable scratch the evaluation functions may count events in
        (numerical-repair tallies); never read by the filters
    """

    dim: int
    noise_dim: int
    initial: Callable[[np.ndarray], np.ndarray]
    transition: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    log_weight: Callable[[int, np.ndarray, np.ndarray], np.ndarray]
    observations: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return int(np.asarray(self.observations).shape[0]) - 1


# ---------------------------------------------------------------------------
# noise sources
# ---------------------------------------------------------------------------

class RngNoise:
    """Uniform stream drawn lazily from a numpy Generator."""

    def __init__(self, rng: np.random.Generator, n_particles: int, noise_dim: int):
        self.rng = rng
        self.n = n_particles
        self.q = noise_dim

    def propagation(self, t: int) -> np.ndarray:
        return self.rng.random((self.n, self.q))

    def resampling_uniforms(self, t: int, count: int) -> np.ndarray:
        return self.rng.random(count)


class ArrayNoise:
    """Positional uniforms backed by a fixed vector of standard Gaussians.

    Layout: the initial propagation block, then for each step t = 1..T one
    systematic-resampling slot followed by that step's propagation block.
    Slots are consumed by position whether or not a resample actually fires,
    so a correlated perturbation of the Gaussian vector perturbs the whole
    filter smoothly.
    """

    def __init__(self, gaussians: np.ndarray, n_particles: int, noise_dim: int, horizon: int):
        need = self.size(n_particles, noise_dim, horizon)
        g = np.asarray(gaussians, dtype=float).ravel()
        if g.size != need:
            raise ValueError(f"noise vector has size {g.size}, layout needs {need}")
        self.g = g
        self.n = n_particles
        self.q = noise_dim
        self.horizon = horizon

    @staticmethod
    def size(n_particles: int, noise_dim: int, horizon: int) -> int:
        return (horizon + 1) * n_particles * noise_dim + horizon

    def _prop_offset(self, t: int) -> int:
        block = self.n * self.q
        return block + (t - 1) * (block + 1) + 1 if t >= 1 else 0

    def propagation(self, t: int) -> np.ndarray:
        start = self._prop_offset(t)
        block = self.g[start:start + self.n * self.q]
        return uniforms_from_gaussians(block).reshape(self.n, self.q)

    def resampling_uniforms(self, t: int, count: int) -> np.ndarray:
        if count != 1:
            raise ValueError("fixed noise layout reserves a single systematic slot per step")
        pos = self._prop_offset(t) - 1
        return uniforms_from_gaussians(self.g[pos:pos + 1])


# ---------------------------------------------------------------------------
# particle clouds and ancestry lineages
# ---------------------------------------------------------------------------

_SPLITMIX_A = np.uint64(0xBF58476D1CE4E5B9)
_SPLITMIX_B = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64).copy()
    x ^= x >> np.uint64(30)
    x *= _SPLITMIX_A
    x ^= x >> np.uint64(27)
    x *= _SPLITMIX_B
    return x ^ (x >> np.uint64(31))


def lineage_init(n: int) -> np.ndarray:
    """Two-lane 128-bit digests of the trivial time-0 lineages (0), ..., (N-1)."""
    idx = np.arange(n, dtype=np.uint64)
    return np.stack([_mix64(idx + np.uint64(0x243F6A8885A308D3)),
                     _mix64(idx + np.uint64(0x13198A2E03707344))], axis=1)


def lineage_extend(lineage: np.ndarray, ancestors: np.ndarray) -> np.ndarray:
    """Roll the digest forward: child i inherits hash(parent digest, parent index).

    Digest equality across two filters is equivalent (up to 128-bit
    collisions) to equality of the full ancestry index vectors.
    """
    a = np.asarray(ancestors, dtype=np.uint64)
    parent = lineage[ancestors]
    return np.stack([_mix64(parent[:, 0] ^ _mix64(a + np.uint64(1))),
                     _mix64(parent[:, 1] ^ _mix64(a + np.uint64(2)))], axis=1)


@dataclass
class ParticleCloud:
    """Weighted particles plus the running evidence and lineage digests."""

    states: np.ndarray
    weights: np.ndarray
    log_z: float
    lineage: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[0]

    def estimate(self, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        """Weighted mean of a test function over the particles."""
        return float(np.dot(self.weights, np.asarray(phi(self.states), dtype=float)))


def paired_count(lineage1: np.ndarray, lineage2: np.ndarray) -> int:
    """Number of particle slots whose full ancestries agree across the filters."""
    return int(np.all(lineage1 == lineage2, axis=1).sum())


def mean_sq_distance(states1: np.ndarray, states2: np.ndarray) -> float:
    """Mean squared Euclidean distance between index-matched particles."""
    d = states1 - states2
    return float(np.mean(np.einsum("ij,ij->i", d, d)))


@dataclass
class CoupledFilterState:
    """Live state of a coupled filter pair at one time index."""

    cloud1: ParticleCloud
    cloud2: ParticleCloud
    t: int
    paired_count: int
    mean_sq_dist: float


@dataclass(frozen=True)
class StepSummary:
    t: int
    paired_count: int
    mean_sq_dist: float
    ess1: float
    ess2: float
    resampled: bool
    fallback: bool
    log_z1: float
    log_z2: float


# ---------------------------------------------------------------------------
# weight bookkeeping
# ---------------------------------------------------------------------------

def _reweight(weights_prev: np.ndarray, log_g: np.ndarray):
    """One observation update: returns (log increment of Z, new weights).

    The increment is log sum_i W_prev,i exp(log_g_i), the weighted mean of
    incremental weights, which reduces to log mean(g) right after a resample.
    """
    with np.errstate(divide="ignore"):
        combined = np.log(weights_prev) + log_g
    m = float(np.max(combined))
    if not np.isfinite(m):
        raise ParticleCollapseError("particle collapse: all incremental weights are zero")
    w = np.exp(combined - m)
    total = float(w.sum())
    return m + math.log(total), w / total


# ---------------------------------------------------------------------------
# coupling construction for a resample event
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OtSchemeConfig:
    """Settings of the transport-based schemes.

    n_neighbours is only used by ot-sparse; None means ceil(log2 N).
    """

    lam: float = 50.0
    n_neighbours: int | None = None
    tol: float = 1e-3
    max_iter: int = 1000
    leaf_size: int = 16

    def sinkhorn_config(self) -> SinkhornConfig:
        return SinkhornConfig(lam=self.lam, tol=self.tol, max_iter=self.max_iter)

    def resolve_neighbours(self, n: int) -> int:
        r = self.n_neighbours if self.n_neighbours is not None else math.ceil(math.log2(max(n, 2)))
        return min(max(int(r), 1), n)


def ot_coupling_for_clouds(cloud1: ParticleCloud, cloud2: ParticleCloud,
                           R="dense", lam: float = 50.0,
                           cfg: OtSchemeConfig | None = None) -> Coupling:
    """Transport coupling of two clouds under squared Euclidean cost.

    R is "dense" for the full cost matrix or an integer neighbour count for
    the sparse truncation.  Sparse failures degrade to the maximal coupling
    with the fallback flag set; dense failures raise.
    """
    if cfg is None:
        cfg = OtSchemeConfig(lam=lam, n_neighbours=None if R == "dense" else int(R))
    if cloud1.states.shape != cloud2.states.shape:
        raise ValueError("clouds must share particle count and dimension")
    if R == "dense":
        return _ot_coupling(cloud1.states, cloud1.weights, cloud2.states, cloud2.weights,
                            cfg, sparse_support=False)
    return _ot_coupling(cloud1.states, cloud1.weights, cloud2.states, cloud2.weights,
                        cfg, sparse_support=True)


def _ot_coupling(states1, w1, states2, w2, cfg: OtSchemeConfig, sparse_support: bool) -> Coupling:
    n = states1.shape[0]
    if sparse_support:
        r = cfg.resolve_neighbours(n)
        rows, cols, d2 = symmetric_knn_support(states1, states2, r, leaf_size=cfg.leaf_size)
        try:
            return sparse_sinkhorn(sparse_cost(rows, cols, d2, n), w1, w2,
                                   cfg.sinkhorn_config())
        except RegularizationError:
            out = maximal_coupling(w1, w2)
            out.fallback = True
            out.converged = False
            return out
    cost = cdist(states1, states2, metric="sqeuclidean")
    return sinkhorn(cost, w1, w2, cfg.sinkhorn_config())


def _coupling_for_scheme(scheme: str, cfg: OtSchemeConfig,
                         states1, w1, states2, w2) -> Coupling:
    if scheme == "independent":
        return independent_coupling(w1, w2)
    if scheme == "maximal":
        return maximal_coupling(w1, w2)
    if scheme == "ot-dense":
        return _ot_coupling(states1, w1, states2, w2, cfg, sparse_support=False)
    if scheme == "ot-sparse":
        return _ot_coupling(states1, w1, states2, w2, cfg, sparse_support=True)
    raise ValueError(f"unknown coupling scheme {scheme!r}; choose from {COUPLING_SCHEMES}")


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

def _ancestors_from_uniforms(weights: np.ndarray, uniforms: np.ndarray,
                             resampler: str) -> np.ndarray:
    n = weights.size
    cum = np.cumsum(weights)
    if resampler == "systematic":
        idx = np.searchsorted(cum, (uniforms[0] + np.arange(n)) / n, side="left")
    elif resampler == "multinomial":
        idx = np.searchsorted(cum, uniforms, side="right")
    else:
        raise ValueError(f"unknown resampler {resampler!r}")
    return np.minimum(idx, n - 1).astype(np.intp)


def _pairs_from_uniforms(coupling: Coupling, uniforms: np.ndarray,
                         resampler: str) -> AncestorPair:
    if resampler == "systematic":
        return systematic_resample(coupling, float(uniforms[0]))
    if resampler == "multinomial":
        from .resampling import _cumulative
        cum, to_pair = _cumulative(coupling)
        flat = np.minimum(np.searchsorted(cum, uniforms, side="right"), cum.size - 1)
        a1, a2 = to_pair(flat)
        return AncestorPair(np.asarray(a1, dtype=np.intp), np.asarray(a2, dtype=np.intp))
    raise ValueError(f"unknown resampler {resampler!r}")


def _resample_count(resampler: str, n: int) -> int:
    return 1 if resampler == "systematic" else n


@dataclass
class FilterResult:
    log_lik: float
    cloud: ParticleCloud
    n_resamples: int
    ess_trace: np.ndarray
    log_z_trace: np.ndarray


def bootstrap_filter(model: ModelSpec, n_particles: int, ess_threshold: float = 0.5,
                     rng: np.random.Generator | None = None, noise=None,
                     resampler: str = "systematic") -> FilterResult:
    """Adaptive-resampling bootstrap filter.

    Resampling fires at a step only when the effective sample size of the
    current weights falls below ess_threshold * N; between resamples the
    weights accumulate multiplicatively and the evidence uses the weighted
    mean of incremental weights.

    Returns the log marginal likelihood estimate and the terminal weighted
    cloud.
    """
    if n_particles < 1:
        raise ValueError("need at least one particle")
    if not 0.0 < ess_threshold <= 1.0:
        raise ValueError("ess_threshold must lie in (0, 1]")
    if noise is None:
        if rng is None:
            raise ValueError("pass either rng or noise")
        noise = RngNoise(rng, n_particles, model.noise_dim)
    obs = np.atleast_2d(np.asarray(model.observations, dtype=float))
    horizon = obs.shape[0] - 1

    states = model.initial(noise.propagation(0))
    log_g = np.asarray(model.log_weight(0, states, obs[0]), dtype=float)
    log_inc, weights = _reweight(np.full(n_particles, 1.0 / n_particles), log_g)
    log_z = log_inc
    lineage = lineage_init(n_particles)
    n_resamples = 0
    ess_trace = np.empty(horizon + 1)
    log_z_trace = np.empty(horizon + 1)
    ess_trace[0] = ess(weights)
    log_z_trace[0] = log_z

    for t in range(1, horizon + 1):
        if ess(weights) < ess_threshold * n_particles:
            u = noise.resampling_uniforms(t, _resample_count(resampler, n_particles))
            anc = _ancestors_from_uniforms(weights, u, resampler)
            states = states[anc]
            lineage = lineage_extend(lineage, anc)
            weights = np.full(n_particles, 1.0 / n_particles)
            n_resamples += 1
        states = model.transition(t, states, noise.propagation(t))
        log_g = np.asarray(model.log_weight(t, states, obs[t]), dtype=float)
        log_inc, weights = _reweight(weights, log_g)
        log_z += log_inc
        ess_trace[t] = ess(weights)
        log_z_trace[t] = log_z

    cloud = ParticleCloud(states, weights, log_z, lineage)
    return FilterResult(log_z, cloud, n_resamples, ess_trace, log_z_trace)


@dataclass
class CoupledResult:
    log_lik1: float
    log_lik2: float
    trace: list
    state: CoupledFilterState
    n_resamples: int
    n_fallbacks: int
    phi_trace1: np.ndarray | None = None
    phi_trace2: np.ndarray | None = None


def coupled_filter(model1: ModelSpec, model2: ModelSpec, n_particles: int,
                   scheme: str = "maximal", scheme_cfg: OtSchemeConfig | None = None,
                   ess_threshold: float = 0.5,
                   rng: np.random.Generator | None = None, noise=None,
                   resampler: str = "systematic",
                   phi: Callable[[np.ndarray], np.ndarray] | None = None) -> CoupledResult:
    """Run two filters on the same uniform stream with coupled resampling.

    A resample is triggered for BOTH sides as soon as the effective sample
    size of either side falls below ess_threshold * N; the ancestor pairs are
    then drawn jointly from the scheme's coupling of the two weight vectors,
    and both weight vectors reset to uniform.  Each side's output is
    distributed exactly as a standalone bootstrap filter.
    """
    if model1.noise_dim != model2.noise_dim:
        raise ValueError("coupled models must consume the same noise dimension")
    obs1 = np.atleast_2d(np.asarray(model1.observations, dtype=float))
    obs2 = np.atleast_2d(np.asarray(model2.observations, dtype=float))
    if obs1.shape[0] != obs2.shape[0]:
        raise ValueError("coupled models must share the time horizon")
    if scheme not in COUPLING_SCHEMES:
        raise ValueError(f"unknown coupling scheme {scheme!r}; choose from {COUPLING_SCHEMES}")
    if not 0.0 < ess_threshold <= 1.0:
        raise ValueError("ess_threshold must lie in (0, 1]")
    if scheme_cfg is None:
        scheme_cfg = OtSchemeConfig()
    if noise is None:
        if rng is None:
            raise ValueError("pass either rng or noise")
        noise = RngNoise(rng, n_particles, model1.noise_dim)
    horizon = obs1.shape[0] - 1

    u0 = noise.propagation(0)
    states1 = model1.initial(u0)
    states2 = model2.initial(u0)
    inc1, w1 = _reweight(np.full(n_particles, 1.0 / n_particles),
                         np.asarray(model1.log_weight(0, states1, obs1[0]), dtype=float))
    inc2, w2 = _reweight(np.full(n_particles, 1.0 / n_particles),
                         np.asarray(model2.log_weight(0, states2, obs2[0]), dtype=float))
    log_z1, log_z2 = inc1, inc2
    lin1 = lineage_init(n_particles)
    lin2 = lineage_init(n_particles)
    n_resamples = 0
    n_fallbacks = 0
    trace = [StepSummary(0, paired_count(lin1, lin2), mean_sq_distance(states1, states2),
                         ess(w1), ess(w2), False, False, log_z1, log_z2)]
    phi1 = phi2 = None
    if phi is not None:
        phi1 = np.empty(horizon + 1)
        phi2 = np.empty(horizon + 1)
        phi1[0] = float(np.dot(w1, np.asarray(phi(states1), dtype=float)))
        phi2[0] = float(np.dot(w2, np.asarray(phi(states2), dtype=float)))

    for t in range(1, horizon + 1):
        threshold = ess_threshold * n_particles
        do_resample = ess(w1) < threshold or ess(w2) < threshold
        fallback = False
        if do_resample:
            coupling = _coupling_for_scheme(scheme, scheme_cfg, states1, w1, states2, w2)
            fallback = coupling.fallback
            n_fallbacks += int(fallback)
            u = noise.resampling_uniforms(t, _resample_count(resampler, n_particles))
            pair = _pairs_from_uniforms(coupling, u, resampler)
            states1 = states1[pair.a1]
            states2 = states2[pair.a2]
            lin1 = lineage_extend(lin1, pair.a1)
            lin2 = lineage_extend(lin2, pair.a2)
            w1 = np.full(n_particles, 1.0 / n_particles)
            w2 = np.full(n_particles, 1.0 / n_particles)
            n_resamples += 1
        u_prop = noise.propagation(t)
        states1 = model1.transition(t, states1, u_prop)
        states2 = model2.transition(t, states2, u_prop)
        inc1, w1 = _reweight(w1, np.asarray(model1.log_weight(t, states1, obs1[t]), dtype=float))
        inc2, w2 = _reweight(w2, np.asarray(model2.log_weight(t, states2, obs2[t]), dtype=float))
        log_z1 += inc1
        log_z2 += inc2
        trace.append(StepSummary(t, paired_count(lin1, lin2),
                                 mean_sq_distance(states1, states2),
                                 ess(w1), ess(w2), do_resample, fallback, log_z1, log_z2))
        if phi is not None:
            phi1[t] = float(np.dot(w1, np.asarray(phi(states1), dtype=float)))
            phi2[t] = float(np.dot(w2, np.asarray(phi(states2), dtype=float)))

    cloud1 = ParticleCloud(states1, w1, log_z1, lin1)
    cloud2 = ParticleCloud(states2, w2, log_z2, lin2)
    final = CoupledFilterState(cloud1, cloud2, horizon, trace[-1].paired_count,
                               trace[-1].mean_sq_dist)
    return CoupledResult(log_z1, log_z2, trace, final, n_resamples, n_fallbacks,
                         phi_trace1=phi1, phi_trace2=phi2)
