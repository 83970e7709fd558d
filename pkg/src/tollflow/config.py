"""Experiment configuration: presets, text-format parsing, round-tripping.

The config format is plain ``key = value`` lines; ``#`` starts a comment.
Unknown keys are rejected. A preset pins the benchmark instance (six links
with latency i*x^2 + i, dispersion 100, horizon 2000, mean discharge 0.05)
and the per-setting arrival mean and toll step; explicit keys override
preset values. Latency polynomials are written like ``2 + 0.5x + 3x^2``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from .network import LatencySpec, ParallelNetwork, paper_network
from .simulation import BoundedDistribution, DemandModel, SimConfig

# Single source for the preset table: (arrival mean lambda, toll step a).
# All presets share R=6, latency i*x^2+i, beta=100, N=2000, mu=0.05.
PRESET_TABLE = {
    "s1": (0.1, 0.0015),
    "s2": (0.2, 0.0015),
    "s3": (0.1, 0.0),
    "s4": (0.2, 0.0),
}
PRESET_LINKS = 6
PRESET_BETA = 100.0
PRESET_HORIZON = 2000
PRESET_MU = 0.05

KNOWN_KEYS = (
    "preset",
    "links",
    "beta",
    "lambda",
    "mu",
    "a",
    "horizon",
    "seed",
    "seeds",
    "record_every",
    "record_samples",
    "x0",
    "p0",
    "inflow",
    "outflow",
    "out",
    "artifacts",
    "epsilon",
    "ode_dt",
    "ode_horizon",
    "tail_fraction",
    "deltas",
)
ARTIFACT_NAMES = ("trajectory", "ode", "equilibrium", "stats")


class ConfigError(ValueError):
    """Config text that fails to parse or violates an invariant."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A SimConfig plus experiment orchestration fields."""

    preset: str
    network: ParallelNetwork
    demand: DemandModel
    beta: float
    toll_step: float
    horizon: int
    seed: int
    seeds: tuple[int, ...]
    record_every: int
    record_samples: bool
    initial_load: tuple[float, ...]
    initial_toll: tuple[float, ...]
    out_dir: str
    artifacts: tuple[str, ...]
    epsilon: float | None
    ode_dt: float | None
    ode_horizon: float
    tail_fraction: float
    deltas: tuple[float, ...]

    def sim_config(self, seed: int | None = None) -> SimConfig:
        return SimConfig(
            network=self.network,
            demand=self.demand,
            beta=self.beta,
            toll_step=self.toll_step,
            horizon=self.horizon,
            initial_load=np.array(self.initial_load),
            initial_toll=np.array(self.initial_toll),
            seed=self.seed if seed is None else seed,
            record_every=self.record_every,
            record_samples=self.record_samples,
        )


def _parse_polynomial(text: str) -> LatencySpec:
    """Parse terms like '1 + 0.5x + 3x^2' into a LatencySpec."""
    terms = []
    for raw in text.split("+"):
        term = raw.strip().replace(" ", "").replace("*", "")
        if not term:
            raise ConfigError(f"empty term in polynomial {text!r}")
        match = re.fullmatch(r"(?P<coef>[0-9.eE+-]*?)(?:(?P<x>x)(?:\^(?P<pow>\d+))?)?", term)
        if match is None or (not match.group("coef") and not match.group("x")):
            raise ConfigError(f"cannot parse polynomial term {raw.strip()!r}")
        coef_text = match.group("coef")
        coef = float(coef_text) if coef_text not in ("", "+", "-") else float(coef_text + "1")
        if match.group("x") is None:
            power = 0
        elif match.group("pow") is None:
            power = 1
        else:
            power = int(match.group("pow"))
        terms.append((power, coef))
    try:
        return LatencySpec(tuple(terms))
    except ValueError as exc:
        raise ConfigError(f"invalid latency polynomial {text!r}: {exc}") from exc


def _format_polynomial(spec: LatencySpec) -> str:
    parts = []
    for power, coef in spec.terms:
        if power == 0:
            parts.append(repr(coef))
        elif power == 1:
            parts.append(f"{coef!r}x")
        else:
            parts.append(f"{coef!r}x^{power}")
    return " + ".join(parts)


def _parse_distribution(text: str) -> BoundedDistribution:
    parts = text.split()
    if not parts:
        raise ConfigError("empty distribution")
    kind, args = parts[0], [float(v) for v in parts[1:]]
    if kind == "uniform" and len(args) == 2:
        return BoundedDistribution("uniform", tuple(args))
    if kind == "degenerate" and len(args) == 1:
        return BoundedDistribution("degenerate", tuple(args))
    if kind == "scaled_beta" and len(args) == 4:
        return BoundedDistribution("scaled_beta", tuple(args))
    raise ConfigError(
        f"distribution must be 'uniform lo hi', 'degenerate v', or "
        f"'scaled_beta a b lo hi'; got {text!r}"
    )


def _format_distribution(dist: BoundedDistribution) -> str:
    return " ".join([dist.kind] + [repr(v) for v in dist.params])


def preset_config(name: str) -> ExperimentConfig:
    """The full experiment configuration for one benchmark setting."""
    if name not in PRESET_TABLE:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESET_TABLE)}")
    lam, a = PRESET_TABLE[name]
    return ExperimentConfig(
        preset=name,
        network=paper_network(PRESET_LINKS),
        demand=DemandModel.default(lam, PRESET_MU),
        beta=PRESET_BETA,
        toll_step=a,
        horizon=PRESET_HORIZON,
        seed=0,
        seeds=tuple(range(20)),
        record_every=1,
        record_samples=False,
        initial_load=(0.0,) * PRESET_LINKS,
        initial_toll=(0.0,) * PRESET_LINKS,
        out_dir=".",
        artifacts=ARTIFACT_NAMES,
        epsilon=None,
        ode_dt=None,
        ode_horizon=30.0,
        tail_fraction=0.25,
        deltas=(0.1, 0.25, 1.0),
    )


def _key_values(text: str) -> list[tuple[int, str, str]]:
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        latency_match = re.fullmatch(r"latency_(\d+)", key)
        if key not in KNOWN_KEYS and latency_match is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        entries.append((lineno, key, value))
    return entries


def parse_config(text: str) -> ExperimentConfig:
    """Parse config text; preset defaults first, explicit keys override."""
    entries = _key_values(text)
    keys = {key for _, key, _ in entries}

    preset = "custom"
    for _, key, value in entries:
        if key == "preset":
            preset = value
    if preset != "custom":
        cfg = preset_config(preset)
        lam, mu = cfg.demand.mean_inflow, cfg.demand.mean_outflow
        latencies = {i + 1: spec for i, spec in enumerate(cfg.network.links)}
        n_links = cfg.network.n_links
        values = {
            "beta": cfg.beta,
            "a": cfg.toll_step,
            "horizon": cfg.horizon,
            "seed": cfg.seed,
            "seeds": cfg.seeds,
            "record_every": cfg.record_every,
            "record_samples": cfg.record_samples,
            "out": cfg.out_dir,
            "artifacts": cfg.artifacts,
            "ode_horizon": cfg.ode_horizon,
            "tail_fraction": cfg.tail_fraction,
            "deltas": cfg.deltas,
            "epsilon": None,
            "ode_dt": None,
            "x0": cfg.initial_load,
            "p0": cfg.initial_toll,
            "inflow": cfg.demand.inflow,
            "outflow": cfg.demand.outflow,
        }
    else:
        required = {"links", "beta", "lambda", "mu", "a", "horizon"}
        missing = sorted(required - keys)
        if missing:
            raise ConfigError(f"custom config requires keys: {', '.join(missing)}")
        lam = mu = None
        latencies = {}
        n_links = None
        values = {
            "beta": None,
            "a": None,
            "horizon": None,
            "seed": 0,
            "seeds": tuple(range(20)),
            "record_every": 1,
            "record_samples": False,
            "out": ".",
            "artifacts": ARTIFACT_NAMES,
            "ode_horizon": 30.0,
            "tail_fraction": 0.25,
            "deltas": (0.1, 0.25, 1.0),
            "epsilon": None,
            "ode_dt": None,
            "x0": None,
            "p0": None,
            "inflow": None,
            "outflow": None,
        }

    explicit_dists = {"inflow": False, "outflow": False}
    for lineno, key, value in entries:
        try:
            if key == "preset":
                continue
            elif key == "links":
                n_links = int(value)
                if n_links < 2:
                    raise ConfigError("links must be >= 2")
            elif key.startswith("latency_"):
                latencies[int(key.split("_", 1)[1])] = _parse_polynomial(value)
            elif key == "lambda":
                lam = float(value)
                if lam <= 0:
                    raise ConfigError("lambda must be > 0")
            elif key == "mu":
                mu = float(value)
                if not 0 < mu < 1:
                    raise ConfigError("mu must lie in (0, 1)")
            elif key == "beta":
                values["beta"] = float(value)
                if values["beta"] < 0:
                    raise ConfigError("beta must be >= 0")
            elif key == "a":
                values["a"] = float(value)
                if not 0.0 <= values["a"] <= 1.0:
                    raise ConfigError("a must lie in [0, 1]")
            elif key == "horizon":
                values["horizon"] = int(value)
                if values["horizon"] < 1:
                    raise ConfigError("horizon must be >= 1")
            elif key == "seed":
                values["seed"] = int(value)
                if values["seed"] < 0:
                    raise ConfigError("seed must be >= 0")
            elif key == "seeds":
                values["seeds"] = tuple(int(v) for v in value.split(","))
                if not values["seeds"] or any(s < 0 for s in values["seeds"]):
                    raise ConfigError("seeds must be a nonempty list of integers >= 0")
            elif key == "record_every":
                values["record_every"] = int(value)
                if values["record_every"] < 1:
                    raise ConfigError("record_every must be >= 1")
            elif key == "record_samples":
                if value not in ("true", "false"):
                    raise ConfigError("record_samples must be true or false")
                values["record_samples"] = value == "true"
            elif key in ("x0", "p0"):
                values[key] = tuple(float(v) for v in value.split(","))
            elif key in ("inflow", "outflow"):
                values[key] = _parse_distribution(value)
                explicit_dists[key] = True
            elif key == "out":
                values["out"] = value
            elif key == "artifacts":
                arts = tuple(v.strip() for v in value.split(","))
                bad = [a for a in arts if a not in ARTIFACT_NAMES]
                if bad:
                    raise ConfigError(f"unknown artifacts {bad}; choose from {ARTIFACT_NAMES}")
                values["artifacts"] = arts
            elif key == "epsilon":
                values["epsilon"] = float(value)
                if values["epsilon"] <= 0:
                    raise ConfigError("epsilon must be > 0")
            elif key == "ode_dt":
                values["ode_dt"] = float(value)
                if values["ode_dt"] <= 0:
                    raise ConfigError("ode_dt must be > 0")
            elif key == "ode_horizon":
                values["ode_horizon"] = float(value)
                if values["ode_horizon"] <= 0:
                    raise ConfigError("ode_horizon must be > 0")
            elif key == "tail_fraction":
                values["tail_fraction"] = float(value)
                if not 0 < values["tail_fraction"] <= 1:
                    raise ConfigError("tail_fraction must lie in (0, 1]")
            elif key == "deltas":
                values["deltas"] = tuple(float(v) for v in value.split(","))
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None

    if n_links is None:
        raise ConfigError("number of links unknown; set 'links' or a preset")
    missing_lat = [i for i in range(1, n_links + 1) if i not in latencies]
    if missing_lat:
        raise ConfigError(f"missing latency polynomials for links {missing_lat}")
    network = ParallelNetwork(tuple(latencies[i] for i in range(1, n_links + 1)))

    defaults = DemandModel.default(lam, mu)
    demand = DemandModel(
        inflow=values["inflow"] if explicit_dists["inflow"] else defaults.inflow,
        outflow=values["outflow"] if explicit_dists["outflow"] else defaults.outflow,
    )
    # declared-mean invariant: distribution means must equal lambda and mu
    if abs(demand.mean_inflow - lam) > 1e-12:
        raise ConfigError(f"inflow mean {demand.mean_inflow!r} does not equal lambda = {lam!r}")
    if abs(demand.mean_outflow - mu) > 1e-12:
        raise ConfigError(f"outflow mean {demand.mean_outflow!r} does not equal mu = {mu!r}")

    x0 = values["x0"] if values["x0"] is not None else (0.0,) * n_links
    p0 = values["p0"] if values["p0"] is not None else (0.0,) * n_links
    if len(x0) == 1:
        x0 = x0 * n_links
    if len(p0) == 1:
        p0 = p0 * n_links
    if len(x0) != n_links or len(p0) != n_links:
        raise ConfigError(f"x0/p0 must have 1 or {n_links} entries")
    if any(v < 0 for v in x0) or any(v < 0 for v in p0):
        raise ConfigError("x0 and p0 must be nonnegative")

    cfg = ExperimentConfig(
        preset=preset,
        network=network,
        demand=demand,
        beta=values["beta"],
        toll_step=values["a"],
        horizon=values["horizon"],
        seed=values["seed"],
        seeds=values["seeds"],
        record_every=values["record_every"],
        record_samples=values["record_samples"],
        initial_load=tuple(float(v) for v in x0),
        initial_toll=tuple(float(v) for v in p0),
        out_dir=values["out"],
        artifacts=values["artifacts"],
        epsilon=values["epsilon"],
        ode_dt=values["ode_dt"],
        ode_horizon=values["ode_horizon"],
        tail_fraction=values["tail_fraction"],
        deltas=values["deltas"],
    )
    cfg.sim_config()  # run SimConfig validation now so errors carry context
    return cfg


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text for a config; parse(format(cfg)) reproduces cfg."""
    lines = [
        f"preset = {cfg.preset}" if cfg.preset != "custom" else "# custom configuration",
        f"links = {cfg.network.n_links}",
    ]
    for i, spec in enumerate(cfg.network.links, start=1):
        lines.append(f"latency_{i} = {_format_polynomial(spec)}")
    lines += [
        f"beta = {cfg.beta!r}",
        f"lambda = {cfg.demand.mean_inflow!r}",
        f"mu = {cfg.demand.mean_outflow!r}",
        f"a = {cfg.toll_step!r}",
        f"horizon = {cfg.horizon}",
        f"inflow = {_format_distribution(cfg.demand.inflow)}",
        f"outflow = {_format_distribution(cfg.demand.outflow)}",
        f"seed = {cfg.seed}",
        f"seeds = {','.join(str(s) for s in cfg.seeds)}",
        f"record_every = {cfg.record_every}",
        f"record_samples = {'true' if cfg.record_samples else 'false'}",
        f"x0 = {','.join(repr(v) for v in cfg.initial_load)}",
        f"p0 = {','.join(repr(v) for v in cfg.initial_toll)}",
        f"out = {cfg.out_dir}",
        f"artifacts = {','.join(cfg.artifacts)}",
        f"ode_horizon = {cfg.ode_horizon!r}",
        f"tail_fraction = {cfg.tail_fraction!r}",
        f"deltas = {','.join(repr(v) for v in cfg.deltas)}",
    ]
    if cfg.epsilon is not None:
        lines.append(f"epsilon = {cfg.epsilon!r}")
    if cfg.ode_dt is not None:
        lines.append(f"ode_dt = {cfg.ode_dt!r}")
    return "\n".join(lines) + "\n"


def config_from_args(preset: str | None, config_path: str | None) -> ExperimentConfig:
    """Build a config from CLI flags: file contents, preset, or both."""
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            text = fh.read()
        if preset is not None:
            text = f"preset = {preset}\n" + text
        return parse_config(text)
    if preset is not None:
        return parse_config(f"preset = {preset}\n")
    raise ConfigError("provide --preset and/or --config")
