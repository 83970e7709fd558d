"""Command-line entry points: simulate, ode, equilibrium, verify, stats."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io, verify
from .config import ConfigError, ExperimentConfig, config_from_args, format_config
from .diagnostics import ensemble_run
from .equilibrium import EquilibriumParams, SolverError, solve_equilibrium_toll
from .ode import IntegrationError, OdeConfig, integrate_coupled
from .simulation import run


def _equilibrium_params(cfg: ExperimentConfig) -> EquilibriumParams:
    return EquilibriumParams(beta=cfg.beta, demand=cfg.demand.demand)


def _metadata(cfg: ExperimentConfig) -> dict:
    return {
        "preset": cfg.preset,
        "links": cfg.network.n_links,
        "beta": cfg.beta,
        "lambda": cfg.demand.mean_inflow,
        "mu": cfg.demand.mean_outflow,
        "a": cfg.toll_step,
        "horizon": cfg.horizon,
    }


def _outdir(cfg: ExperimentConfig, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: ExperimentConfig, out: str | None = None, seeds=None) -> list[Path]:
    out_dir = _outdir(cfg, out)
    written = []
    if "trajectory" not in cfg.artifacts:
        return written
    for seed in seeds if seeds is not None else [cfg.seed]:
        traj = run(cfg.sim_config(seed=int(seed)))
        written.append(io.trajectory_to_csv(traj, out_dir / f"trajectory_seed{int(seed)}.csv"))
    return written


def cmd_ode(cfg: ExperimentConfig, out: str | None = None) -> list[Path]:
    out_dir = _outdir(cfg, out)
    if "ode" not in cfg.artifacts:
        return []
    mu = cfg.demand.mean_outflow
    epsilon = cfg.epsilon if cfg.epsilon is not None else cfg.toll_step / mu
    if epsilon <= 0:
        raise ConfigError(
            "epsilon = a/mu must be > 0 for the coupled system; "
            "set a > 0 or pass epsilon explicitly"
        )
    dt = cfg.ode_dt if cfg.ode_dt is not None else epsilon / 20.0
    ode_cfg = OdeConfig(
        epsilon=epsilon,
        dt=dt,
        horizon=cfg.ode_horizon,
        initial_load=np.array(cfg.initial_load),
        initial_toll=np.array(cfg.initial_toll),
    )
    traj = integrate_coupled(ode_cfg, cfg.network, _equilibrium_params(cfg))
    return [io.ode_trajectory_to_csv(traj, out_dir / "ode.csv")]


def cmd_equilibrium(cfg: ExperimentConfig, out: str | None = None) -> list[Path]:
    out_dir = _outdir(cfg, out)
    if "equilibrium" not in cfg.artifacts:
        return []
    solution = solve_equilibrium_toll(cfg.network, _equilibrium_params(cfg))
    return [io.equilibrium_to_json(solution, out_dir / "equilibrium.json", metadata=_metadata(cfg))]


def cmd_stats(cfg: ExperimentConfig, out: str | None = None, seeds=None) -> list[Path]:
    out_dir = _outdir(cfg, out)
    if "stats" not in cfg.artifacts:
        return []
    stats = ensemble_run(
        cfg.sim_config(),
        seeds if seeds is not None else cfg.seeds,
        deltas=cfg.deltas,
        tail_fraction=cfg.tail_fraction,
    )
    return [io.stats_to_csv(stats, out_dir / "stats.csv")]


def cmd_verify() -> int:
    results = verify.run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f"  {r.detail}" if r.detail else ""
        print(f"{r.name:<{width}}  {status}  margin={r.margin:+.3e}{detail}")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tollflow",
        description="Adaptive marginal-cost tolling: simulation, ODE limits, equilibria",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "ode", "equilibrium", "stats"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="path to a key = value config file")
        cmd.add_argument("--preset", help="benchmark preset: s1, s2, s3, or s4")
        cmd.add_argument("--out", help="output directory (overrides the config)")
        if name in ("simulate", "stats"):
            cmd.add_argument("--seeds", help="comma-separated seed list")
    show = sub.add_parser("show-config", help="print the resolved canonical config")
    show.add_argument("--config")
    show.add_argument("--preset")
    sub.add_parser("verify", help="run the invariant table")

    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify()
        cfg = config_from_args(args.preset, args.config)
        if args.command == "show-config":
            print(format_config(cfg), end="")
            return 0
        seeds = None
        if getattr(args, "seeds", None):
            seeds = [int(s) for s in args.seeds.split(",")]
        if args.command == "simulate":
            written = cmd_simulate(cfg, args.out, seeds)
        elif args.command == "ode":
            written = cmd_ode(cfg, args.out)
        elif args.command == "equilibrium":
            written = cmd_equilibrium(cfg, args.out)
        else:
            written = cmd_stats(cfg, args.out, seeds)
        for path in written:
            print(path)
        return 0
    except (ConfigError, SolverError, IntegrationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
