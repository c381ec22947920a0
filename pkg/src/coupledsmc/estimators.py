"""Estimators built on coupled filters, plus chain-efficiency summaries.

The two-level filter and the delta log-likelihood are thin drivers around
one coupled filter run; the two MCMC samplers differ in what they keep
between iterations (the noisy chain re-estimates the likelihood difference
from scratch every step, the correlated pseudo-marginal chain recycles its
auxiliary noise and stored estimate).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateChainError, ParticleCollapseError
from .filtering import ArrayNoise, ModelSpec, OtSchemeConfig, bootstrap_filter, coupled_filter


# ---------------------------------------------------------------------------
# two-level filtering
# ---------------------------------------------------------------------------

@dataclass
class MlpfResult:
    """Outputs of one coupled two-level run for a test function phi.

    The headline estimates are at the terminal time; the per-time arrays hold
    the filtering estimates at every observation index, whose difference is
    the level corrector the replicate variance of which is the quantity of
    interest.
    """

    coarse_estimate: float
    fine_estimate: float
    ml_estimate: float
    delta_log_lik: float
    phi_coarse: np.ndarray
    phi_fine: np.ndarray
    phi_diff: np.ndarray
    log_lik_diff: np.ndarray
    trace: list

    def __post_init__(self):
        expected = self.coarse_estimate + (self.fine_estimate - self.coarse_estimate)
        assert self.ml_estimate == expected


def mlpf_two_level(model_coarse: ModelSpec, model_fine: ModelSpec,
                   phi: Callable[[np.ndarray], np.ndarray], n_particles: int,
                   scheme: str = "ot-sparse", scheme_cfg: OtSchemeConfig | None = None,
                   ess_threshold: float = 0.5,
                   rng: np.random.Generator | None = None,
                   resampler: str = "systematic") -> MlpfResult:
    """Couple a coarse and a fine fidelity of the same model through resampling.

    The models must consume the same noise stream (equal noise dimension);
    for Euler-discretized diffusions that means building the coarse level
    with paired noise.
    """
    res = coupled_filter(model_coarse, model_fine, n_particles, scheme=scheme,
                         scheme_cfg=scheme_cfg, ess_threshold=ess_threshold,
                         rng=rng, resampler=resampler, phi=phi)
    coarse = float(res.phi_trace1[-1])
    fine = float(res.phi_trace2[-1])
    log_lik_diff = np.array([s.log_z2 - s.log_z1 for s in res.trace])
    return MlpfResult(coarse, fine, coarse + (fine - coarse),
                      res.log_lik2 - res.log_lik1,
                      res.phi_trace1, res.phi_trace2, res.phi_trace2 - res.phi_trace1,
                      log_lik_diff, res.trace)


def delta_loglik(model_minus: ModelSpec, model_plus: ModelSpec, n_particles: int,
                 scheme: str = "ot-sparse", scheme_cfg: OtSchemeConfig | None = None,
                 ess_threshold: float = 0.5,
                 rng: np.random.Generator | None = None,
                 resampler: str = "systematic") -> float:
    """Log-likelihood difference (plus minus minus) from one coupled run."""
    res = coupled_filter(model_minus, model_plus, n_particles, scheme=scheme,
                         scheme_cfg=scheme_cfg, ess_threshold=ess_threshold,
                         rng=rng, resampler=resampler)
    return res.log_lik2 - res.log_lik1


# ---------------------------------------------------------------------------
# MCMC samplers
# ---------------------------------------------------------------------------

@dataclass
class McmcChain:
    """Parameter chain with the likelihood-related scalar stored per iteration."""

    samples: np.ndarray
    log_lik_estimates: np.ndarray
    accept_count: int
    per_step_seconds: float
    collapse_count: int = 0

    def __post_init__(self):
        if self.samples.shape[0] != self.log_lik_estimates.size + 1:
            raise ValueError("need one sample row per iteration plus the start point")
        if not 0 <= self.accept_count <= self.log_lik_estimates.size:
            raise ValueError("acceptance count out of range")

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / max(self.log_lik_estimates.size, 1)


def make_coupled_delta_fn(pair_builder: Callable[[np.ndarray, np.ndarray], tuple],
                          n_particles: int, scheme: str = "ot-sparse",
                          scheme_cfg: OtSchemeConfig | None = None,
                          ess_threshold: float = 0.5,
                          resampler: str = "systematic"):
    """Delta log-likelihood estimator for a parameter pair via one coupled filter."""

    def delta_fn(theta, theta_prime, rng):
        m_cur, m_prop = pair_builder(theta, theta_prime)
        return delta_loglik(m_cur, m_prop, n_particles, scheme=scheme,
                            scheme_cfg=scheme_cfg, ess_threshold=ess_threshold,
                            rng=rng, resampler=resampler)

    return delta_fn


def noisy_mcmc(pair_builder: Callable[[np.ndarray, np.ndarray], tuple] | None,
               log_prior: Callable[[np.ndarray], float],
               proposal_std, theta0, n_iter: int, n_particles: int = 0,
               scheme: str = "ot-sparse", scheme_cfg: OtSchemeConfig | None = None,
               ess_threshold: float = 0.5,
               rng: np.random.Generator | None = None,
               resampler: str = "systematic",
               delta_fn: Callable | None = None) -> McmcChain:
    """Random-walk chain accepting with min(1, prior ratio * exp(delta estimate)).

    The delta log-likelihood between the current and proposed parameters is
    re-estimated from scratch at every iteration and the previous estimate is
    discarded, so the invariant law is only an approximation of the posterior
    that sharpens as the estimator variance shrinks.  ``delta_fn`` overrides
    the default coupled-filter estimator (pass the exact difference to recover
    plain Metropolis-Hastings).  A particle collapse at a proposal counts as
    a rejection.
    """
    if rng is None:
        raise ValueError("rng is required")
    if delta_fn is None:
        if pair_builder is None or n_particles < 1:
            raise ValueError("need pair_builder and n_particles when delta_fn is absent")
        delta_fn = make_coupled_delta_fn(pair_builder, n_particles, scheme=scheme,
                                         scheme_cfg=scheme_cfg, ess_threshold=ess_threshold,
                                         resampler=resampler)
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    step = np.broadcast_to(np.asarray(proposal_std, dtype=float), theta.shape)
    samples = np.empty((n_iter + 1, theta.size))
    deltas = np.empty(n_iter)
    samples[0] = theta
    lp = float(log_prior(theta))
    accept = 0
    collapses = 0
    start = time.perf_counter()
    for it in range(n_iter):
        prop = theta + step * rng.standard_normal(theta.size)
        try:
            delta = float(delta_fn(theta, prop, rng))
            log_acc = float(log_prior(prop)) - lp + delta
            if math.log(rng.random()) < log_acc:
                theta = prop
                lp = float(log_prior(theta))
                accept += 1
        except ParticleCollapseError:
            delta = -math.inf
            collapses += 1
        samples[it + 1] = theta
        deltas[it] = delta
    seconds = (time.perf_counter() - start) / max(n_iter, 1)
    return McmcChain(samples, deltas, accept, seconds, collapses)


def autoregressive_refresh(aux: np.ndarray, rho: float, xi: np.ndarray) -> np.ndarray:
    """One stationarity-preserving update of the auxiliary Gaussian vector.

    rho = 1 returns aux unchanged; rho = 0 returns fresh noise; any rho in
    between leaves the standard normal law invariant.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    return rho * aux + math.sqrt(1.0 - rho * rho) * xi


def correlated_pm_mcmc(model_builder: Callable[[np.ndarray], ModelSpec],
                       log_prior: Callable[[np.ndarray], float],
                       proposal_std, theta0, rho: float, n_iter: int,
                       n_particles: int,
                       ess_threshold: float = 0.5,
                       rng: np.random.Generator | None = None) -> McmcChain:
    """Pseudo-marginal chain recycling the filter's auxiliary noise.

    The whole uniform consumption of one bootstrap filter (initial and
    per-step propagation noise plus one systematic-resampling slot per step)
    is represented as a fixed Gaussian vector u; a proposal perturbs it to
    rho u + sqrt(1 - rho^2) xi and the pair (theta, u) is accepted jointly
    with the stored likelihood estimates, which makes the chain exact for the
    posterior.  rho = 0 is the standard uncorrelated pseudo-marginal sampler.
    """
    if rng is None:
        raise ValueError("rng is required")
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    theta = np.atleast_1d(np.asarray(theta0, dtype=float))
    step = np.broadcast_to(np.asarray(proposal_std, dtype=float), theta.shape)

    def run(th, g):
        model = model_builder(th)
        noise = ArrayNoise(g, n_particles, model.noise_dim, model.horizon)
        return bootstrap_filter(model, n_particles, ess_threshold=ess_threshold,
                                noise=noise, resampler="systematic").log_lik

    model0 = model_builder(theta)
    size = ArrayNoise.size(n_particles, model0.noise_dim, model0.horizon)
    aux = rng.standard_normal(size)
    ll = run(theta, aux)
    lp = float(log_prior(theta))

    samples = np.empty((n_iter + 1, theta.size))
    lls = np.empty(n_iter)
    samples[0] = theta
    accept = 0
    collapses = 0
    start = time.perf_counter()
    for it in range(n_iter):
        prop = theta + step * rng.standard_normal(theta.size)
        aux_prop = autoregressive_refresh(aux, rho, rng.standard_normal(size))
        try:
            ll_prop = run(prop, aux_prop)
            lp_prop = float(log_prior(prop))
            if math.log(rng.random()) < lp_prop - lp + ll_prop - ll:
                theta, aux, ll, lp = prop, aux_prop, ll_prop, lp_prop
                accept += 1
        except ParticleCollapseError:
            collapses += 1
        samples[it + 1] = theta
        lls[it] = ll
    seconds = (time.perf_counter() - start) / max(n_iter, 1)
    return McmcChain(samples, lls, accept, seconds, collapses)


# ---------------------------------------------------------------------------
# chain efficiency
# ---------------------------------------------------------------------------

def iact(chain) -> float:
    """Integrated autocorrelation time by the initial-positive-sequence rule.

    Autocovariances use the biased 1/n normalization; lag pairs
    (rho_{2m} + rho_{2m+1}) are accumulated while positive and the sum stops
    at the first nonpositive pair.  Well-behaved chains give a value >= 1; an
    antithetic chain legitimately estimates below 1, which is reported with a
    warning rather than an error.
    """
    x = np.asarray(chain, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise ValueError("chain too short for an autocorrelation estimate")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        raise DegenerateChainError("degenerate chain: zero variance")
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for k in range(n // 2):
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * float(pair)
    # estimation noise puts well-behaved chains within O(1/sqrt(n)) of 1;
    # flag only clearly sub-1 estimates (negatively correlated chains)
    if tau < 1.0 - 4.0 / math.sqrt(n):
        warnings.warn("integrated autocorrelation estimate below 1 (antithetic chain?)",
                      stacklevel=2)
    return tau


def inefficiency(iact_value: float, per_step_seconds: float) -> float:
    """Computational inefficiency of a chain: autocorrelation time x step cost."""
    if iact_value <= 0 or per_step_seconds <= 0:
        raise ValueError("inputs must be positive")
    return iact_value * per_step_seconds


def variance_inefficiency(variance: float, run_seconds: float) -> float:
    """Computational inefficiency of an estimator: variance x running time."""
    if variance <= 0 or run_seconds <= 0:
        raise ValueError("inputs must be positive")
    return variance * run_seconds


def inefficiency_ratio(baseline: float, proposed: float) -> float:
    """How many times less efficient the baseline is than the proposal."""
    if baseline <= 0 or proposed <= 0:
        raise ValueError("inputs must be positive")
    return baseline / proposed
