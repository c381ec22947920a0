"""Command-line harness: one subcommand per experiment, plus data generation.

Config files are flat INI: a section named after the experiment kind holds
key = value pairs for any ExperimentConfig field; command-line flags override
the file.  Exit status is 0 on success and 2 on a configuration problem.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from .experiments import EXPERIMENT_KINDS, default_config, run_experiment
from .models import (
    DiffusionParams,
    LinearGaussianParams,
    ParParams,
    RickerParams,
    generate_dataset,
)


def _tuple_of(cast):
    def parse(text: str) -> tuple:
        return tuple(cast(part.strip()) for part in text.split(",") if part.strip())
    return parse


def _int_or_none(text: str):
    text = text.strip()
    return None if text.lower() in ("", "none", "auto") else int(text)


_FIELD_PARSERS = {
    "out_dir": str,
    "seed": int,
    "replicates": int,
    "threads": int,
    "n_particles": int,
    "horizon": int,
    "ess_threshold": float,
    "schemes": _tuple_of(str),
    "resampler": str,
    "lam": float,
    "n_neighbours": _int_or_none,
    "sinkhorn_tol": float,
    "sinkhorn_max_iter": int,
    "model": str,
    "data_seed": int,
    "obs_csv": str,
    "dim": int,
    "delta": float,
    "dt": float,
    "gammas": _tuple_of(float),
    "sizes": _tuple_of(int),
    "n_iter": int,
    "burn_in": int,
    "n_particles_noisy": int,
    "n_particles_cpm": int,
    "rho": float,
    "proposal_std": float,
    "prior_mean": _tuple_of(float),
    "prior_std": _tuple_of(float),
}


class ConfigError(ValueError):
    pass


def load_config_overrides(path: str, kind: str) -> dict:
    """Parse the INI section for this experiment kind into config overrides."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    if parser.has_section(kind):
        section = parser[kind]
    elif parser.has_section("experiment"):
        section = parser["experiment"]
    else:
        raise ConfigError(f"config file has no [{kind}] or [experiment] section")
    overrides = {}
    for key, raw in section.items():
        if key not in _FIELD_PARSERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            overrides[key] = _FIELD_PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    return overrides


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="INI config file")
    sub.add_argument("--out", metavar="DIR", help="output directory")
    sub.add_argument("--seed", type=int, metavar="U64", help="base seed")
    sub.add_argument("--replicates", type=int, metavar="INT")
    sub.add_argument("--threads", type=int, metavar="INT", help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coupledsmc",
        description="Coupled particle filter experiments and data generation.")
    subs = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        sub = subs.add_parser(kind, help=f"run the {kind} experiment")
        _add_common_flags(sub)
    gen = subs.add_parser("generate-data", help="simulate a dataset to CSV + JSON sidecar")
    gen.add_argument("--model", required=True,
                     choices=["ricker", "diffusion", "par", "linear-gaussian"])
    gen.add_argument("--out", required=True, metavar="CSV")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--horizon", type=int, default=50)
    gen.add_argument("--dim", type=int, default=5, help="ricker only")
    gen.add_argument("--delta", type=float, default=0.1, help="diffusion only")
    gen.add_argument("--dt", type=float, default=0.001, help="diffusion/par step")
    return parser


def _generate(args) -> int:
    if args.model == "ricker":
        params = RickerParams(dim=args.dim, x0=(5.0,) * args.dim)
    elif args.model == "diffusion":
        params = DiffusionParams(delta=args.delta, dt=args.dt)
    elif args.model == "par":
        params = ParParams(dt=args.dt)
    else:
        params = LinearGaussianParams()
    generate_dataset(args.model, params, args.horizon, args.seed, args.out)
    print(f"wrote {args.out} and {Path(args.out).with_suffix('.json')}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate-data":
            return _generate(args)
        overrides = {}
        if args.config:
            overrides.update(load_config_overrides(args.config, args.command))
        if args.out is not None:
            overrides["out_dir"] = args.out
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.replicates is not None:
            overrides["replicates"] = args.replicates
        if args.threads is not None:
            overrides["threads"] = args.threads
        cfg = default_config(args.command, **overrides)
        record = run_experiment(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    n_fail = len(record.manifest["failures"])
    status = f" ({n_fail} replicate failures)" if n_fail else ""
    print(f"{cfg.kind}: wrote {len(record.manifest['outputs'])} files to "
          f"{record.out_dir}{status}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
