"""Experiment harness: one entry point per comparison in the study.

Every experiment follows the same pipeline: derive one independent random
stream per replicate from the base seed, run the replicates (optionally on a
process pool), write the per-replicate rows, reduce them to nearest-rank
median / 5% / 95% bands, and drop a JSON manifest describing exactly what
ran.  Identical config and seed give byte-identical CSV output.

CSV contract (consumed by the plotting frontend): UTF-8, LF line endings,
'.' decimal separator, mandatory header row; first column is the x-axis,
then one column group per scheme or method.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import correlated_pm_mcmc, iact, inefficiency, mlpf_two_level, noisy_mcmc
from .filtering import OtSchemeConfig, coupled_filter
from .models import (
    DiffusionParams,
    ParParams,
    RickerParams,
    diffusion_model,
    par_model,
    read_observations,
    ricker_model,
    simulate_diffusion,
    simulate_par,
    simulate_ricker,
)
from .neighbours import symmetric_knn_support
from .rng import replicate_rng
from .simplex import normalize
from .transport import SinkhornConfig, sinkhorn, sparse_cost, sparse_sinkhorn

EXPERIMENT_KINDS = (
    "proportion-paired",
    "distance-trace",
    "sparse-speedup",
    "mlpf",
    "delta-loglik",
    "mcmc-compare",
    "par-delta",
)


@dataclass
class ExperimentConfig:
    """Flat bag of knobs; each kind reads the subset it needs."""

    kind: str
    out_dir: str = "runs"
    seed: int = 7
    replicates: int = 20
    threads: int = 1
    # filtering
    n_particles: int = 500
    horizon: int = 50
    ess_threshold: float = 0.5
    schemes: tuple = ("independent", "maximal")
    resampler: str = "systematic"
    # transport
    lam: float = 50.0
    n_neighbours: int | None = None
    sinkhorn_tol: float = 1e-3
    sinkhorn_max_iter: int = 1000
    # data
    model: str = "ricker"
    data_seed: int = 1
    obs_csv: str | None = None
    dim: int = 5
    delta: float = 0.1
    dt: float = 0.01
    gammas: tuple = (1e-3, 1e-2, 1e-1)
    # sparse-speedup
    sizes: tuple = (500, 1000, 2000)
    # mcmc
    n_iter: int = 10_000
    burn_in: int = 1_000
    n_particles_noisy: int = 20
    n_particles_cpm: int = 2_000
    rho: float = 0.9
    proposal_std: float = 0.5
    prior_mean: tuple = (-1.0, 0.0)
    prior_std: tuple = (0.75, 0.75)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def scheme_cfg(self) -> OtSchemeConfig:
        return OtSchemeConfig(lam=self.lam, n_neighbours=self.n_neighbours,
                              tol=self.sinkhorn_tol, max_iter=self.sinkhorn_max_iter)


KIND_DEFAULTS = {
    "proportion-paired": dict(model="ricker", schemes=("independent", "maximal"),
                              gammas=(1e-3, 1e-2, 1e-1), n_particles=500, horizon=50),
    "distance-trace": dict(model="ricker", schemes=("independent", "maximal", "ot-sparse"),
                           gammas=(1e-3,), n_particles=500, horizon=50),
    "sparse-speedup": dict(model="ricker", replicates=100, sizes=(500, 1000, 2000)),
    "mlpf": dict(model="diffusion", schemes=("maximal", "ot-sparse"), lam=500.0,
                 n_particles=256, horizon=20, replicates=50),
    "delta-loglik": dict(model="diffusion", schemes=("maximal", "ot-sparse"), lam=500.0,
                         gammas=(1e-2, 5e-2), n_particles=256, horizon=20, replicates=50),
    "mcmc-compare": dict(model="diffusion", horizon=10, replicates=1, lam=500.0),
    "par-delta": dict(model="par", schemes=("maximal", "ot-sparse"), lam=50.0,
                      gammas=(1e-2, 5e-2), n_particles=256, horizon=20, replicates=50),
}


def default_config(kind: str, **overrides) -> ExperimentConfig:
    """Config with the kind's experiment defaults applied."""
    values = dict(KIND_DEFAULTS.get(kind, {}))
    values.update(overrides)
    return ExperimentConfig(kind=kind, **values)


# ---------------------------------------------------------------------------
# CSV plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path):
    """(header, float matrix) of a harness CSV."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        body = fh.read().strip()
    if not body:
        return header, np.empty((0, len(header)))
    data = np.array([[float(v) for v in line.split(",")] for line in body.split("\n")])
    return header, data


def nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    n = sorted_values.size
    if n == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(percentile / 100.0 * n))
    return float(sorted_values[min(k, n) - 1])


def aggregate_csv(per_replicate_path, out_path) -> None:
    """Reduce a per-replicate file to (x, median, p5, p95) column groups.

    The input layout is (replicate, x, value columns...); output keeps the x
    column and emits <name>_median, <name>_p5, <name>_p95 per value column.
    """
    header, data = read_csv(per_replicate_path)
    if data.size == 0:
        raise ValueError(f"no rows to aggregate in {per_replicate_path}")
    if header[0] != "replicate":
        raise ValueError("per-replicate file must start with a replicate column")
    x_name, value_names = header[1], header[2:]
    xs = np.unique(data[:, 1])
    out_header = [x_name]
    for name in value_names:
        out_header += [f"{name}_median", f"{name}_p5", f"{name}_p95"]
    rows = []
    for x in xs:
        sel = data[data[:, 1] == x]
        row = [x]
        for j in range(len(value_names)):
            vals = np.sort(sel[:, 2 + j])
            row += [nearest_rank(vals, 50), nearest_rank(vals, 5), nearest_rank(vals, 95)]
        rows.append(row)
    write_csv(out_path, out_header, rows)


# ---------------------------------------------------------------------------
# datasets and model builders
# ---------------------------------------------------------------------------

def _ricker_params(cfg: ExperimentConfig) -> RickerParams:
    return RickerParams(dim=cfg.dim, x0=(5.0,) * cfg.dim)

def _diffusion_params(cfg: ExperimentConfig) -> DiffusionParams:
    return DiffusionParams(delta=cfg.delta, dt=cfg.dt)

def _par_params(cfg: ExperimentConfig) -> ParParams:
    return ParParams()


def load_observations(cfg: ExperimentConfig) -> np.ndarray:
    """Observations from the configured CSV, or simulated at the true parameters."""
    if cfg.obs_csv:
        return read_observations(cfg.obs_csv)
    rng = replicate_rng(cfg.data_seed)
    if cfg.model == "ricker":
        return simulate_ricker(_ricker_params(cfg), cfg.horizon, rng)[1]
    if cfg.model == "diffusion":
        return simulate_diffusion(_diffusion_params(cfg), cfg.horizon, rng)[1]
    if cfg.model == "par":
        return simulate_par(_par_params(cfg), cfg.horizon, rng)[1]
    raise ValueError(f"unknown model {cfg.model!r}")


def _gamma_pair_models(cfg: ExperimentConfig, gamma: float, obs: np.ndarray):
    """Model pair at parameters scaled by (1 - gamma) and (1 + gamma)."""
    if cfg.model == "ricker":
        base = _ricker_params(cfg)
        return (ricker_model(base.scaled(1.0 - gamma), obs),
                ricker_model(base.scaled(1.0 + gamma), obs))
    if cfg.model == "diffusion":
        base = _diffusion_params(cfg)
        return (diffusion_model(base.scaled_noise(1.0 - gamma), obs),
                diffusion_model(base.scaled_noise(1.0 + gamma), obs))
    if cfg.model == "par":
        base = _par_params(cfg)
        return (par_model(base.scaled_first_two(1.0 - gamma), obs),
                par_model(base.scaled_first_two(1.0 + gamma), obs))
    raise ValueError(f"unknown model {cfg.model!r}")


# ---------------------------------------------------------------------------
# replicate bodies (top level so a process pool can pickle them)
# ---------------------------------------------------------------------------

def _trace_replicate(cfg: ExperimentConfig, obs, gamma_idx: int, r: int, field: str):
    """C_t/N or E_t per scheme for one replicate of one gamma."""
    gamma = cfg.gammas[gamma_idx]
    out = {}
    for s_idx, scheme in enumerate(cfg.schemes):
        rng = replicate_rng(cfg.seed, gamma_idx, s_idx, r)
        m1, m2 = _gamma_pair_models(cfg, gamma, obs)
        res = coupled_filter(m1, m2, cfg.n_particles, scheme=scheme,
                             scheme_cfg=cfg.scheme_cfg(),
                             ess_threshold=cfg.ess_threshold, rng=rng,
                             resampler=cfg.resampler)
        if field == "paired":
            out[scheme] = [s.paired_count / cfg.n_particles for s in res.trace]
        else:
            out[scheme] = [s.mean_sq_dist for s in res.trace]
    return out


def _speedup_replicate(cfg: ExperimentConfig, n: int, r: int):
    """Dense and sparse transport wall times on one synthetic cloud pair."""
    rng = replicate_rng(cfg.seed, n, r)
    x1 = rng.normal(size=(n, cfg.dim))
    x2 = x1 + 0.3 * rng.normal(size=(n, cfg.dim))
    a = normalize(rng.random(n) + 0.1)
    b = normalize(rng.random(n) + 0.1)
    scfg = SinkhornConfig(lam=cfg.lam, tol=cfg.sinkhorn_tol, max_iter=cfg.sinkhorn_max_iter)
    R = cfg.n_neighbours or max(1, math.ceil(math.log2(n)))

    t0 = time.perf_counter()
    cost = ((x1[:, None, :] - x2[None, :, :]) ** 2).sum(axis=2)
    sinkhorn(cost, a, b, scfg)
    dense_seconds = time.perf_counter() - t0

    t0 = time.perf_counter()
    rows, cols, d2 = symmetric_knn_support(x1, x2, R, method="tree")
    sparse_sinkhorn(sparse_cost(rows, cols, d2, n), a, b, scfg)
    sparse_seconds = time.perf_counter() - t0
    return dense_seconds, sparse_seconds


def _mlpf_replicate(cfg: ExperimentConfig, obs, r: int):
    """Per-time level correctors and wall time for each scheme."""
    fine_params = DiffusionParams(delta=cfg.delta, dt=cfg.dt / 2.0)
    out = {}
    for s_idx, scheme in enumerate(cfg.schemes):
        rng = replicate_rng(cfg.seed, s_idx, r)
        coarse = diffusion_model(_diffusion_params(cfg), obs, noise_pairing=2)
        fine = diffusion_model(fine_params, obs)
        t0 = time.perf_counter()
        res = mlpf_two_level(coarse, fine, lambda x: x[:, 0] + x[:, 1],
                             cfg.n_particles, scheme=scheme, scheme_cfg=cfg.scheme_cfg(),
                             ess_threshold=cfg.ess_threshold, rng=rng,
                             resampler=cfg.resampler)
        seconds = time.perf_counter() - t0
        out[scheme] = (res.phi_diff, res.log_lik_diff, seconds)
    return out


def _delta_replicate(cfg: ExperimentConfig, obs, gamma_idx: int, r: int):
    """Delta log-likelihood estimate and wall time for each scheme."""
    gamma = cfg.gammas[gamma_idx]
    out = {}
    for s_idx, scheme in enumerate(cfg.schemes):
        rng = replicate_rng(cfg.seed, gamma_idx, s_idx, r)
        m_minus, m_plus = _gamma_pair_models(cfg, gamma, obs)
        t0 = time.perf_counter()
        res = coupled_filter(m_minus, m_plus, cfg.n_particles, scheme=scheme,
                             scheme_cfg=cfg.scheme_cfg(),
                             ess_threshold=cfg.ess_threshold, rng=rng,
                             resampler=cfg.resampler)
        seconds = time.perf_counter() - t0
        out[scheme] = (res.log_lik2 - res.log_lik1, seconds)
    return out


def _mcmc_replicate(cfg: ExperimentConfig, obs, r: int):
    """One noisy chain and one correlated pseudo-marginal chain."""
    prior_mean = np.asarray(cfg.prior_mean)
    prior_std = np.asarray(cfg.prior_std)

    def log_prior(theta):
        return float(-0.5 * np.sum(((theta - prior_mean) / prior_std) ** 2))

    base = _diffusion_params(cfg)

    def build(theta):
        params = dataclasses.replace(base, alpha=math.exp(theta[0]),
                                     sigma=math.exp(theta[1]))
        return diffusion_model(params, obs)

    def pair_builder(theta, theta_prime):
        return build(theta), build(theta_prime)

    theta0 = np.array(cfg.prior_mean, dtype=float)
    noisy = noisy_mcmc(pair_builder, log_prior, cfg.proposal_std, theta0, cfg.n_iter,
                       n_particles=cfg.n_particles_noisy, scheme="ot-sparse",
                       scheme_cfg=cfg.scheme_cfg(), ess_threshold=cfg.ess_threshold,
                       rng=replicate_rng(cfg.seed, 0, r), resampler=cfg.resampler)
    cpm = correlated_pm_mcmc(build, log_prior, cfg.proposal_std, theta0, cfg.rho,
                             cfg.n_iter, cfg.n_particles_cpm,
                             ess_threshold=cfg.ess_threshold,
                             rng=replicate_rng(cfg.seed, 1, r))
    return noisy, cpm


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _gamma_tag(gamma: float) -> str:
    return f"{gamma:g}".replace(".", "p")


def _loggable(args) -> list:
    return [a for a in args if isinstance(a, (int, float, str, bool))]


def _run_replicates(cfg: ExperimentConfig, task, args_list, record):
    """Run the replicate bodies, serially or on a process pool; collect
    (args, result) for successes and log failures into the manifest."""
    results = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [(args, pool.submit(task, cfg, *args)) for args in args_list]
            for args, fut in futures:
                try:
                    results.append((args, fut.result()))
                except Exception as exc:  # noqa: BLE001 - aggregate over successes
                    record["failures"].append({"args": _loggable(args), "error": str(exc)})
    else:
        for args in args_list:
            try:
                results.append((args, task(cfg, *args)))
            except Exception as exc:  # noqa: BLE001
                record["failures"].append({"args": _loggable(args), "error": str(exc)})
    if not results:
        raise RuntimeError("every replicate failed; see the manifest failure log")
    return results


def _run_trace_kind(cfg: ExperimentConfig, record, field: str, value_name: str):
    obs = load_observations(cfg)
    out = Path(cfg.out_dir)
    for gamma_idx, gamma in enumerate(cfg.gammas):
        args = [(obs, gamma_idx, r, field) for r in range(cfg.replicates)]
        results = _run_replicates(cfg, _trace_replicate, args, record)
        rows = []
        for (_, _, r, _), traces in results:
            for t in range(cfg.horizon + 1):
                rows.append([r, t] + [traces[s][t] for s in cfg.schemes])
        tag = _gamma_tag(gamma)
        rep_path = out / f"replicates_gamma{tag}.csv"
        write_csv(rep_path, ["replicate", "t"] + [f"{value_name}_{s}" for s in cfg.schemes],
                  rows)
        agg_path = out / f"aggregate_gamma{tag}.csv"
        aggregate_csv(rep_path, agg_path)
        record["outputs"] += [rep_path.name, agg_path.name]


def _run_sparse_speedup(cfg: ExperimentConfig, record):
    out = Path(cfg.out_dir)
    args = [(n, r) for n in cfg.sizes for r in range(cfg.replicates)]
    results = _run_replicates(cfg, _speedup_replicate, args, record)
    rows = [[r, n, dense, sparse, dense / sparse]
            for (n, r), (dense, sparse) in results]
    rows.sort(key=lambda row: (row[1], row[0]))
    rep_path = out / "replicates.csv"
    write_csv(rep_path, ["replicate", "n", "dense_seconds", "sparse_seconds", "ratio"], rows)
    agg_path = out / "aggregate.csv"
    aggregate_csv(rep_path, agg_path)
    record["outputs"] += [rep_path.name, agg_path.name]


def _variance_metric_rows(cfg, results, x_of, value_of, seconds_of):
    """Per-x inefficiency table: variance, mean seconds, their product and
    the ratio of the first scheme's inefficiency over each later scheme's."""
    xs = sorted({x_of(args) for args, _ in results})
    rows = []
    for x in xs:
        sel = [res for args, res in results if x_of(args) == x]
        row = [x]
        ineffs = {}
        for scheme in cfg.schemes:
            vals = np.array([value_of(res, scheme) for res in sel])
            secs = float(np.mean([seconds_of(res, scheme) for res in sel]))
            var = float(vals.var(ddof=1)) if vals.size > 1 else float("nan")
            ineff = var * secs
            ineffs[scheme] = ineff
            row += [var, secs, ineff]
        baseline = cfg.schemes[0]
        for scheme in cfg.schemes[1:]:
            row.append(ineffs[baseline] / ineffs[scheme]
                       if ineffs[scheme] and not math.isnan(ineffs[scheme]) else float("nan"))
        rows.append(row)
    header = ["x"]
    for scheme in cfg.schemes:
        header += [f"var_{scheme}", f"seconds_{scheme}", f"inefficiency_{scheme}"]
    header += [f"ratio_{cfg.schemes[0]}_over_{s}" for s in cfg.schemes[1:]]
    return header, rows


def _run_mlpf(cfg: ExperimentConfig, record):
    obs = load_observations(cfg)
    out = Path(cfg.out_dir)
    args = [(obs, r) for r in range(cfg.replicates)]
    results = _run_replicates(cfg, _mlpf_replicate, args, record)
    rows = []
    for (_, r), per_scheme in results:
        for k in range(cfg.horizon + 1):
            row = [r, k]
            for scheme in cfg.schemes:
                phi_diff, ll_diff, _ = per_scheme[scheme]
                row += [phi_diff[k], ll_diff[k]]
            rows.append(row)
    header = ["replicate", "k"]
    for scheme in cfg.schemes:
        header += [f"phi_diff_{scheme}", f"ll_diff_{scheme}"]
    rep_path = out / "replicates.csv"
    write_csv(rep_path, header, rows)
    aggregate_csv(rep_path, out / "aggregate.csv")
    write_csv(out / "timings.csv",
              ["replicate"] + [f"seconds_{s}" for s in cfg.schemes],
              [[r] + [per_scheme[s][2] for s in cfg.schemes]
               for (_, r), per_scheme in results])

    # terminal-time inefficiency of the level corrector
    metric_header, metric_rows = _variance_metric_rows(
        cfg, results, x_of=lambda a: cfg.horizon,
        value_of=lambda res, s: float(res[s][0][-1]),
        seconds_of=lambda res, s: res[s][2])
    write_csv(out / "inefficiency.csv", metric_header, metric_rows)
    record["outputs"] += ["replicates.csv", "aggregate.csv", "timings.csv",
                          "inefficiency.csv"]


def _run_delta_kind(cfg: ExperimentConfig, record):
    obs = load_observations(cfg)
    out = Path(cfg.out_dir)
    args = [(obs, gi, r) for gi in range(len(cfg.gammas)) for r in range(cfg.replicates)]
    results = _run_replicates(cfg, _delta_replicate, args, record)
    rows = []
    timing_rows = []
    for (_, gi, r), per_scheme in results:
        rows.append([r, cfg.gammas[gi]] + [per_scheme[s][0] for s in cfg.schemes])
        timing_rows.append([r, cfg.gammas[gi]] + [per_scheme[s][1] for s in cfg.schemes])
    rows.sort(key=lambda row: (row[1], row[0]))
    timing_rows.sort(key=lambda row: (row[1], row[0]))
    rep_path = out / "replicates.csv"
    write_csv(rep_path, ["replicate", "gamma"] + [f"delta_{s}" for s in cfg.schemes], rows)
    write_csv(out / "timings.csv",
              ["replicate", "gamma"] + [f"seconds_{s}" for s in cfg.schemes], timing_rows)
    aggregate_csv(rep_path, out / "aggregate.csv")
    metric_header, metric_rows = _variance_metric_rows(
        cfg, results, x_of=lambda a: cfg.gammas[a[1]],
        value_of=lambda res, s: res[s][0],
        seconds_of=lambda res, s: res[s][1])
    write_csv(out / "inefficiency.csv", metric_header, metric_rows)
    record["outputs"] += ["replicates.csv", "timings.csv", "aggregate.csv",
                          "inefficiency.csv"]


def _run_mcmc_compare(cfg: ExperimentConfig, record):
    obs = load_observations(cfg)
    out = Path(cfg.out_dir)
    args = [(obs, r) for r in range(cfg.replicates)]
    results = _run_replicates(cfg, _mcmc_replicate, args, record)
    rows = []
    ineff_rows = []
    for (_, r), (noisy, cpm) in results:
        for chain, label in ((noisy, "noisy"), (cpm, "cpm")):
            dump = out / f"chain_{label}_r{r}.csv"
            write_csv(dump, ["alpha", "sigma"], np.exp(chain.samples))
            record["outputs"].append(dump.name)
        for p in range(noisy.samples.shape[1]):
            iact_noisy = iact(noisy.samples[cfg.burn_in:, p])
            iact_cpm = iact(cpm.samples[cfg.burn_in:, p])
            ineff_noisy = inefficiency(max(iact_noisy, 1e-12), noisy.per_step_seconds)
            ineff_cpm = inefficiency(max(iact_cpm, 1e-12), cpm.per_step_seconds)
            rows.append([r, p, iact_noisy, iact_cpm,
                         noisy.acceptance_rate, cpm.acceptance_rate])
            ineff_rows.append([r, p, noisy.per_step_seconds, cpm.per_step_seconds,
                               ineff_noisy, ineff_cpm, ineff_cpm / ineff_noisy])
    rep_path = out / "replicates.csv"
    write_csv(rep_path, ["replicate", "param", "iact_noisy", "iact_cpm",
                         "accept_noisy", "accept_cpm"], rows)
    write_csv(out / "inefficiency.csv",
              ["replicate", "param", "seconds_noisy", "seconds_cpm",
               "inefficiency_noisy", "inefficiency_cpm", "ratio_cpm_over_noisy"],
              ineff_rows)
    aggregate_csv(rep_path, out / "aggregate.csv")
    record["outputs"] += [rep_path.name, "aggregate.csv", "inefficiency.csv"]


@dataclass
class RunRecord:
    """What a finished experiment wrote and how it was configured."""

    manifest_path: Path
    out_dir: Path
    manifest: dict


def run_experiment(cfg: ExperimentConfig) -> RunRecord:
    """Execute one experiment and persist replicate rows, aggregates and manifest."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record = {
        "kind": cfg.kind,
        "version": __version__,
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "failures": [],
        "outputs": [],
        "started_unix": time.time(),
    }
    t0 = time.perf_counter()
    if cfg.kind == "proportion-paired":
        _run_trace_kind(cfg, record, field="paired", value_name="paired")
    elif cfg.kind == "distance-trace":
        _run_trace_kind(cfg, record, field="distance", value_name="distance")
    elif cfg.kind == "sparse-speedup":
        _run_sparse_speedup(cfg, record)
    elif cfg.kind == "mlpf":
        _run_mlpf(cfg, record)
    elif cfg.kind in ("delta-loglik", "par-delta"):
        _run_delta_kind(cfg, record)
    elif cfg.kind == "mcmc-compare":
        _run_mcmc_compare(cfg, record)
    else:  # pragma: no cover - guarded by ExperimentConfig
        raise ValueError(f"unknown experiment kind {cfg.kind!r}")
    record["seconds"] = time.perf_counter() - t0
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return RunRecord(manifest_path, out, record)
