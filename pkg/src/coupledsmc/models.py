"""Benchmark state-space models, their simulators, and a Kalman oracle.

Each factory packages a model as the algorithmic description the filters
consume: transitions are deterministic in (t, state, uniforms), with all
Gaussian noise produced from the shared inverse-CDF map, so two filters fed
the same uniforms see literally the same innovations.

Observation files are CSV, one row per time step, one column per observation
coordinate; synthetic datasets carry a JSON sidecar of parameters and seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from .filtering import ModelSpec
from .rng import gaussians_from_uniforms

# keeps Poisson observation weights strictly positive at zero intensity
POISSON_MEAN_FLOOR = 1e-300

_LOG_2PI = math.log(2.0 * math.pi)


def _gaussian_logpdf(y: float, mean: np.ndarray, var: float) -> np.ndarray:
    return -0.5 * (_LOG_2PI + math.log(var)) - (y - mean) ** 2 / (2.0 * var)


# ---------------------------------------------------------------------------
# multivariate Ricker map with Poisson observations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RickerParams:
    """log growth rate, innovation std, Poisson observation scale."""

    log_r: float = 2.0
    sigma_eps: float = 0.3
    phi: float = 5.0
    dim: int = 5
    x0: tuple = (5.0, 5.0, 5.0, 5.0, 5.0)

    def __post_init__(self):
        # sigma_eps = 0 is allowed: the transition is then deterministic but
        # the model stays well defined (positivity only matters for phi)
        if self.sigma_eps < 0 or self.phi <= 0:
            raise ValueError("sigma_eps must be nonnegative and phi positive")
        if len(self.x0) != self.dim:
            raise ValueError("x0 must have length dim")

    def scaled(self, factor: float) -> "RickerParams":
        """All three structural parameters multiplied by ``factor``."""
        return dataclasses.replace(self, log_r=factor * self.log_r,
                                   sigma_eps=factor * self.sigma_eps,
                                   phi=factor * self.phi)


def ricker_model(params: RickerParams, observations) -> ModelSpec:
    """Coordinatewise stochastic Ricker growth, conditionally Poisson counts."""
    p = params
    r = math.exp(p.log_r)
    x0 = np.asarray(p.x0, dtype=float)

    def initial(u):
        return np.tile(x0, (u.shape[0], 1))

    def transition(t, x, u):
        eps = p.sigma_eps * gaussians_from_uniforms(u)
        return r * x * np.exp(-x + eps)

    def log_weight(t, x, y):
        mean = np.maximum(p.phi * x, POISSON_MEAN_FLOOR)
        return (y * np.log(mean) - mean - gammaln(y + 1.0)).sum(axis=1)

    return ModelSpec(p.dim, p.dim, initial, transition, log_weight,
                     np.atleast_2d(np.asarray(observations, dtype=float)))


def simulate_ricker(params: RickerParams, horizon: int, rng: np.random.Generator):
    """Latent path and Poisson counts for times 0..horizon."""
    p = params
    r = math.exp(p.log_r)
    states = np.empty((horizon + 1, p.dim))
    states[0] = p.x0
    for t in range(1, horizon + 1):
        eps = p.sigma_eps * rng.standard_normal(p.dim)
        states[t] = r * states[t - 1] * np.exp(-states[t - 1] + eps)
    obs = rng.poisson(np.maximum(p.phi * states, 0.0)).astype(float)
    return states, obs


# ---------------------------------------------------------------------------
# planar diffusion with rotational multiplicative noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionParams:
    """Mean-reversion alpha, volatility scale sigma, observation noise std."""

    alpha: float = 0.5
    sigma: float = 1.0
    sigma_eps: float = 0.5
    delta: float = 0.1
    dt: float = 0.001
    x0: tuple = (0.2, 0.2)

    def __post_init__(self):
        if self.dt <= 0 or self.delta <= 0:
            raise ValueError("dt and delta must be positive")
        n_sub = self.delta / self.dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("dt must divide the observation spacing delta")

    @property
    def n_substeps(self) -> int:
        return int(round(self.delta / self.dt))

    def scaled_noise(self, factor: float) -> "DiffusionParams":
        """sigma and sigma_eps multiplied by ``factor`` (alpha untouched)."""
        return dataclasses.replace(self, sigma=factor * self.sigma,
                                   sigma_eps=factor * self.sigma_eps)


def rotation_volatility(z: np.ndarray) -> np.ndarray:
    """(N, 2, 2) rotation-form volatility matrices evaluated at the rows of z."""
    r = np.hypot(z[:, 0], z[:, 1])
    s, c = np.sin(r), np.cos(r)
    out = np.empty((z.shape[0], 2, 2))
    out[:, 0, 0] = s
    out[:, 0, 1] = -c
    out[:, 1, 0] = c
    out[:, 1, 1] = s
    return out


def _euler_step(x: np.ndarray, w: np.ndarray, alpha: float, sigma: float,
                dt: float) -> np.ndarray:
    r = sigma * np.hypot(x[:, 0], x[:, 1])
    s, c = np.sin(r), np.cos(r)
    gw0 = s * w[:, 0] - c * w[:, 1]
    gw1 = c * w[:, 0] + s * w[:, 1]
    sq = math.sqrt(dt)
    return np.column_stack([x[:, 0] - alpha * x[:, 0] * dt + sq * gw0,
                            x[:, 1] - alpha * x[:, 1] * dt + sq * gw1])


def diffusion_model(params: DiffusionParams, observations,
                    noise_pairing: int = 1) -> ModelSpec:
    """Euler-discretized diffusion observed in its first coordinate.

    ``noise_pairing`` makes the model consume the uniform stream of a finer
    discretization: each Euler substep uses the sum of ``noise_pairing``
    consecutive fine Gaussian pairs, scaled by 1/sqrt(noise_pairing).  A
    coarse level built with noise_pairing=2 therefore shares its stream with
    the dt/2 level, which is what couples the two levels of a two-level
    filter.
    """
    p = params
    n_sub = p.n_substeps
    pairing = int(noise_pairing)
    if pairing < 1:
        raise ValueError("noise_pairing must be at least 1")
    q = 2 * n_sub * pairing
    x0 = np.asarray(p.x0, dtype=float)
    scale = 1.0 / math.sqrt(pairing)

    def initial(u):
        return np.tile(x0, (u.shape[0], 1))

    def transition(t, x, u):
        z = gaussians_from_uniforms(u)
        for s in range(n_sub):
            block = z[:, 2 * pairing * s:2 * pairing * (s + 1)]
            w = np.column_stack([block[:, 0::2].sum(axis=1),
                                 block[:, 1::2].sum(axis=1)]) * scale
            x = _euler_step(x, w, p.alpha, p.sigma, p.dt)
        return x

    def log_weight(t, x, y):
        return _gaussian_logpdf(float(np.asarray(y).ravel()[0]), x[:, 0], p.sigma_eps ** 2)

    return ModelSpec(2, q, initial, transition, log_weight,
                     np.atleast_2d(np.asarray(observations, dtype=float)))


def simulate_diffusion(params: DiffusionParams, horizon: int, rng: np.random.Generator):
    """Latent path at observation times and noisy first-coordinate readings."""
    p = params
    x = np.asarray(p.x0, dtype=float)[None, :]
    states = np.empty((horizon + 1, 2))
    states[0] = x[0]
    for k in range(1, horizon + 1):
        for _ in range(p.n_substeps):
            x = _euler_step(x, rng.standard_normal((1, 2)), p.alpha, p.sigma, p.dt)
        states[k] = x[0]
    obs = states[:, :1] + p.sigma_eps * rng.standard_normal((horizon + 1, 1))
    return states, obs


# ---------------------------------------------------------------------------
# prokaryotic auto-regulation diffusion approximation
# ---------------------------------------------------------------------------

STOICHIOMETRY = np.array([
    [0, 0, 1, 0, 0, 0, -1, 0],
    [0, 0, 0, 1, -2, 2, 0, -1],
    [-1, 1, 0, 0, 1, -1, 0, 0],
    [-1, 1, 0, 0, 0, 0, 0, 0],
], dtype=float)

OBSERVATION_VECTOR = np.array([0.0, 1.0, 2.0, 0.0])

DEFAULT_RATES = (0.1, 0.7, 0.35, 0.35, 0.2, 0.1, 0.9, 0.3)

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)


@dataclass(frozen=True)
class ParParams:
    """Reaction rates, conservation constant and observation noise variance."""

    rates: tuple = DEFAULT_RATES
    conservation: float = 10.0
    sigma_eps2: float = 10.0
    dt: float = 0.1
    x0: tuple = (8.0, 8.0, 8.0, 5.0)

    def __post_init__(self):
        if len(self.rates) != 8 or any(c <= 0 for c in self.rates):
            raise ValueError("need 8 positive reaction rates")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        n_sub = 1.0 / self.dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("dt must divide the unit observation interval")

    @property
    def n_substeps(self) -> int:
        return int(round(1.0 / self.dt))

    def scaled_first_two(self, factor: float) -> "ParParams":
        c = list(self.rates)
        c[0] *= factor
        c[1] *= factor
        return dataclasses.replace(self, rates=tuple(c))


def par_hazard(x: np.ndarray, rates, conservation: float) -> np.ndarray:
    """Reaction propensities, clamped at zero.

    The dimerization term x4 (x4 - 1) / 2 goes negative for x4 in (0, 1)
    under the continuous relaxation, which would make the diffusion matrix
    indefinite; clamping keeps S diag(h) S^T positive semidefinite.
    """
    c = np.asarray(rates, dtype=float)
    h = np.empty((x.shape[0], 8))
    h[:, 0] = c[0] * x[:, 0] * x[:, 1]
    h[:, 1] = c[1] * (conservation - x[:, 0])
    h[:, 2] = c[2] * x[:, 0]
    h[:, 3] = c[3] * x[:, 2]
    h[:, 4] = c[4] * x[:, 3] * (x[:, 3] - 1.0) / 2.0
    h[:, 5] = c[5] * x[:, 1]
    h[:, 6] = c[6] * x[:, 2]
    h[:, 7] = c[7] * x[:, 3]
    return np.clip(h, 0.0, None)


def par_diffusion_matrix(h: np.ndarray) -> np.ndarray:
    """(N, 4, 4) diffusion matrices S diag(h) S^T; symmetric PSD for h >= 0."""
    return np.einsum("ik,nk,jk->nij", STOICHIOMETRY, h, STOICHIOMETRY)


def _batched_cholesky(beta: np.ndarray, diagnostics: dict | None):
    for jit in _JITTERS:
        try:
            chol = np.linalg.cholesky(beta + jit * np.eye(4) if jit else beta)
        except np.linalg.LinAlgError:
            continue
        if jit and diagnostics is not None:
            diagnostics["cholesky_jitter"] = diagnostics.get("cholesky_jitter", 0) + 1
        return chol
    raise np.linalg.LinAlgError("diffusion matrix not factorizable even with jitter")


def _par_substep(x, z, p: ParParams, diagnostics=None):
    h = par_hazard(x, p.rates, p.conservation)
    beta = par_diffusion_matrix(h)
    chol = _batched_cholesky(beta, diagnostics)
    x = x + h @ STOICHIOMETRY.T * p.dt + math.sqrt(p.dt) * np.einsum("nij,nj->ni", chol, z)
    x = np.clip(x, 0.0, None)
    x[:, 0] = np.minimum(x[:, 0], p.conservation)
    return x


def par_model(params: ParParams, observations) -> ModelSpec:
    """Four-species reaction network observed through (0, 1, 2, 0) . x."""
    p = params
    n_sub = p.n_substeps
    x0 = np.asarray(p.x0, dtype=float)
    diagnostics: dict = {}

    def initial(u):
        return np.tile(x0, (u.shape[0], 1))

    def transition(t, x, u):
        z = gaussians_from_uniforms(u)
        for s in range(n_sub):
            x = _par_substep(x, z[:, 4 * s:4 * (s + 1)], p, diagnostics)
        return x

    def log_weight(t, x, y):
        mean = x @ OBSERVATION_VECTOR
        return _gaussian_logpdf(float(np.asarray(y).ravel()[0]), mean, p.sigma_eps2)

    return ModelSpec(4, 4 * n_sub, initial, transition, log_weight,
                     np.atleast_2d(np.asarray(observations, dtype=float)),
                     diagnostics=diagnostics)


def simulate_par(params: ParParams, horizon: int, rng: np.random.Generator):
    p = params
    x = np.asarray(p.x0, dtype=float)[None, :]
    states = np.empty((horizon + 1, 4))
    states[0] = x[0]
    for k in range(1, horizon + 1):
        for _ in range(p.n_substeps):
            x = _par_substep(x, rng.standard_normal((1, 4)), p)
        states[k] = x[0]
    obs = states @ OBSERVATION_VECTOR + math.sqrt(p.sigma_eps2) * rng.standard_normal(horizon + 1)
    return states, obs[:, None]


# ---------------------------------------------------------------------------
# scalar linear-Gaussian model and its exact likelihood
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearGaussianParams:
    a: float = 0.9
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    x0_mean: float = 0.0
    x0_var: float | None = None  # None: stationary variance sigma_x^2 / (1 - a^2)

    def prior_variance(self) -> float:
        if self.x0_var is not None:
            return self.x0_var
        if abs(self.a) >= 1:
            raise ValueError("stationary prior needs |a| < 1; pass x0_var explicitly")
        return self.sigma_x ** 2 / (1.0 - self.a ** 2)


def linear_gaussian_model(params: LinearGaussianParams, observations) -> ModelSpec:
    p = params
    prior_sd = math.sqrt(p.prior_variance())

    def initial(u):
        return p.x0_mean + prior_sd * gaussians_from_uniforms(u[:, :1])

    def transition(t, x, u):
        return p.a * x + p.sigma_x * gaussians_from_uniforms(u[:, :1])

    def log_weight(t, x, y):
        return _gaussian_logpdf(float(np.asarray(y).ravel()[0]), x[:, 0], p.sigma_y ** 2)

    return ModelSpec(1, 1, initial, transition, log_weight,
                     np.atleast_2d(np.asarray(observations, dtype=float)))


def kalman_loglik(params: LinearGaussianParams, observations) -> float:
    """Exact log marginal likelihood by the scalar Kalman recursion."""
    p = params
    obs = np.asarray(observations, dtype=float).ravel()
    m = p.x0_mean
    var = p.prior_variance()
    ll = 0.0
    for t, y in enumerate(obs):
        if t > 0:
            m = p.a * m
            var = p.a ** 2 * var + p.sigma_x ** 2
        innov_var = var + p.sigma_y ** 2
        ll += -0.5 * (_LOG_2PI + math.log(innov_var) + (y - m) ** 2 / innov_var)
        gain = var / innov_var
        m = m + gain * (y - m)
        var = (1.0 - gain) * var
    return float(ll)


def simulate_linear_gaussian(params: LinearGaussianParams, horizon: int,
                             rng: np.random.Generator):
    p = params
    x = p.x0_mean + math.sqrt(p.prior_variance()) * rng.standard_normal()
    states = np.empty(horizon + 1)
    states[0] = x
    for t in range(1, horizon + 1):
        x = p.a * x + p.sigma_x * rng.standard_normal()
        states[t] = x
    obs = states + p.sigma_y * rng.standard_normal(horizon + 1)
    return states[:, None], obs[:, None]


# ---------------------------------------------------------------------------
# observation files
# ---------------------------------------------------------------------------

def write_observations(path, obs) -> None:
    """CSV with header y0..y{d-1}, one row per time step, LF line endings."""
    obs = np.atleast_2d(np.asarray(obs, dtype=float))
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"y{j}" for j in range(obs.shape[1])) + "\n")
        for row in obs:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_observations(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


_SIMULATORS = {
    "ricker": (RickerParams, simulate_ricker),
    "diffusion": (DiffusionParams, simulate_diffusion),
    "par": (ParParams, simulate_par),
    "linear-gaussian": (LinearGaussianParams, simulate_linear_gaussian),
}


def generate_dataset(kind: str, params, horizon: int, seed: int, csv_path):
    """Simulate a dataset, write the CSV plus a JSON sidecar, return the observations."""
    if kind not in _SIMULATORS:
        raise ValueError(f"unknown model kind {kind!r}")
    _, simulate = _SIMULATORS[kind]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    _, obs = simulate(params, horizon, rng)
    write_observations(csv_path, obs)
    sidecar = Path(csv_path).with_suffix(".json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump({"model": kind, "params": dataclasses.asdict(params),
                   "horizon": horizon, "seed": int(seed)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return obs
