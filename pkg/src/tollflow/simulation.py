"""Discrete-time stochastic load and toll dynamics.

Each step draws a random arriving demand and per-link discharge fractions,
splits the arrivals by the logit rule evaluated at the current state, and
interpolates tolls toward the marginal cost of the current load:

    X(n+1) = X(n) + fractions(X(n), P(n)) * zeta(n+1) - X(n) * xi(n+1)
    P(n+1) = (1 - a) P(n) + a * X(n) * ell'(X(n))

Both updates read the same pre-step state (simultaneous update). The toll
step a is small compared to the mean discharge rate mu, which is what makes
the toll dynamics the slow timescale.

Randomness comes from named counter-based Philox4x64-10 streams keyed by
(seed, stream tag): one stream for arrivals and one per link for discharge,
so runs are bit-reproducible and adding links never perturbs existing
streams.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import as_float_vector, check_nonnegative
from .equilibrium import best_response_fractions
from .network import ParallelNetwork

_INFLOW_STREAM = 0
_OUTFLOW_STREAM_BASE = 1_000


@dataclass(frozen=True)
class BoundedDistribution:
    """Bounded-support scalar distribution: uniform, scaled beta, or point mass."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        kind = self.kind
        params = tuple(float(v) for v in self.params)
        if kind == "uniform":
            if len(params) != 2 or not params[0] <= params[1]:
                raise ValueError("uniform takes (lo, hi) with lo <= hi")
        elif kind == "degenerate":
            if len(params) != 1:
                raise ValueError("degenerate takes a single point")
        elif kind == "scaled_beta":
            if len(params) != 4 or params[0] <= 0 or params[1] <= 0 or not params[2] <= params[3]:
                raise ValueError("scaled_beta takes (a, b, lo, hi) with a, b > 0 and lo <= hi")
        else:
            raise ValueError(f"unknown distribution kind {kind!r}")
        object.__setattr__(self, "params", params)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return self.params
        if self.kind == "degenerate":
            return (self.params[0], self.params[0])
        a, b, lo, hi = self.params
        return (lo, hi)

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            lo, hi = self.params
            return 0.5 * (lo + hi)
        if self.kind == "degenerate":
            return self.params[0]
        a, b, lo, hi = self.params
        return lo + (hi - lo) * a / (a + b)

    def sample(self, gen: np.random.Generator) -> float:
        if self.kind == "uniform":
            lo, hi = self.params
            return float(gen.uniform(lo, hi))
        if self.kind == "degenerate":
            return self.params[0]
        a, b, lo, hi = self.params
        return float(lo + (hi - lo) * gen.beta(a, b))


def uniform_dist(lo: float, hi: float) -> BoundedDistribution:
    return BoundedDistribution("uniform", (lo, hi))


def degenerate_dist(point: float) -> BoundedDistribution:
    return BoundedDistribution("degenerate", (point,))


def scaled_beta_dist(a: float, b: float, lo: float, hi: float) -> BoundedDistribution:
    return BoundedDistribution("scaled_beta", (a, b, lo, hi))


@dataclass(frozen=True)
class DemandModel:
    """Arrival and discharge distributions; i.i.d. across steps and links."""

    inflow: BoundedDistribution
    outflow: BoundedDistribution

    def __post_init__(self):
        lo, hi = self.inflow.support
        if lo <= 0:
            raise ValueError(f"inflow support must sit inside (0, inf), got lower end {lo}")
        olo, ohi = self.outflow.support
        if olo <= 0 or ohi >= 1:
            raise ValueError(f"outflow support must sit inside (0, 1), got [{olo}, {ohi}]")

    @property
    def mean_inflow(self) -> float:
        return self.inflow.mean

    @property
    def mean_outflow(self) -> float:
        return self.outflow.mean

    @property
    def demand(self) -> float:
        """Steady-state expected total load lambda/mu."""
        return self.mean_inflow / self.mean_outflow

    @staticmethod
    def default(lam: float, mu: float) -> DemandModel:
        """Symmetric uniform noise around the requested means.

        Inflow is uniform on [lam/2, 3*lam/2]. Discharge is uniform on a
        symmetric interval around mu, clamped so the upper end stays below 1
        while preserving the mean.
        """
        if lam <= 0:
            raise ValueError("lam must be positive")
        if not 0 < mu < 1:
            raise ValueError("mu must lie in (0, 1)")
        hi = min(1.5 * mu, 0.5 * (1.0 + mu))
        return DemandModel(uniform_dist(0.5 * lam, 1.5 * lam), uniform_dist(2 * mu - hi, hi))


class RngStreams:
    """Philox4x64-10 streams keyed by (seed, stream tag)."""

    def __init__(self, seed: int, n_links: int):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        self.seed = seed
        self.inflow = self._stream(seed, _INFLOW_STREAM)
        self.outflow = [self._stream(seed, _OUTFLOW_STREAM_BASE + i) for i in range(n_links)]

    @staticmethod
    def _stream(seed: int, tag: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=np.array([seed, tag], dtype=np.uint64)))


def sample_inflow(model: DemandModel, streams: RngStreams) -> float:
    """One arriving-demand draw from the inflow stream."""
    return model.inflow.sample(streams.inflow)


def sample_outflows(model: DemandModel, streams: RngStreams, n_links: int) -> np.ndarray:
    """Independent per-link discharge fractions, one draw per link stream."""
    if n_links != len(streams.outflow):
        raise ValueError(f"streams were built for {len(streams.outflow)} links, asked for {n_links}")
    return np.array([model.outflow.sample(g) for g in streams.outflow])


@dataclass(frozen=True)
class SimConfig:
    """Everything one stochastic run needs."""

    network: ParallelNetwork
    demand: DemandModel
    beta: float
    toll_step: float
    horizon: int
    initial_load: np.ndarray | float = 0.0
    initial_toll: np.ndarray | float = 0.0
    seed: int = 0
    record_every: int = 1
    record_samples: bool = False

    def __post_init__(self):
        n = self.network.n_links
        beta = float(self.beta)
        if not np.isfinite(beta) or beta < 0:
            raise ValueError(f"beta must be finite and >= 0, got {beta}")
        a = float(self.toll_step)
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"toll step a must lie in [0, 1], got {a}")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be a positive integer")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be a positive integer")
        x0 = as_float_vector(self.initial_load, n, "initial_load")
        p0 = as_float_vector(self.initial_toll, n, "initial_toll")
        check_nonnegative(x0, "initial_load")
        check_nonnegative(p0, "initial_toll")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "toll_step", a)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "record_every", int(self.record_every))
        object.__setattr__(self, "initial_load", x0)
        object.__setattr__(self, "initial_toll", p0)
        seed = int(self.seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be a nonnegative 64-bit integer")
        object.__setattr__(self, "seed", seed)

    def with_seed(self, seed: int) -> SimConfig:
        return replace(self, seed=int(seed))

    def fingerprint(self) -> str:
        """Stable digest of everything that determines the run."""
        parts = [
            repr([spec.terms for spec in self.network.links]),
            repr((self.demand.inflow.kind, self.demand.inflow.params)),
            repr((self.demand.outflow.kind, self.demand.outflow.params)),
            repr((self.beta, self.toll_step, self.horizon, self.seed, self.record_every)),
            repr(self.initial_load.tolist()),
            repr(self.initial_toll.tolist()),
        ]
        return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SimState:
    """One point of the Markov chain plus its generator state.

    step() advances the generators it carries; treat a state as consumed
    once it has been stepped.
    """

    n: int
    load: np.ndarray
    toll: np.ndarray
    streams: RngStreams


def initial_state(cfg: SimConfig) -> SimState:
    return SimState(
        n=0,
        load=cfg.initial_load.copy(),
        toll=cfg.initial_toll.copy(),
        streams=RngStreams(cfg.seed, cfg.network.n_links),
    )


def step(state: SimState, cfg: SimConfig) -> SimState:
    """One simultaneous load/toll update; draws fresh demand samples."""
    new_state, _, _ = _step_with_samples(state, cfg)
    return new_state


def _step_with_samples(state: SimState, cfg: SimConfig):
    net = cfg.network
    zeta = sample_inflow(cfg.demand, state.streams)
    xi = sample_outflows(cfg.demand, state.streams, net.n_links)
    fractions = best_response_fractions(net, state.load, state.toll, cfg.beta)
    arrivals = fractions * zeta
    discharged = state.load * xi
    # both updates read the pre-step (X, P)
    new_load = state.load + arrivals - discharged
    new_toll = (1.0 - cfg.toll_step) * state.toll + cfg.toll_step * net.marginal_costs(state.load)
    return SimState(state.n + 1, new_load, new_toll, state.streams), zeta, xi


def martingale_term(
    net: ParallelNetwork, load, toll, zeta: float, xi, lam: float, mu: float, beta: float
) -> np.ndarray:
    """Zero-conditional-mean noise of the load update, in step-size units.

    With t = target_load(X, P) the exact decomposition of the raw update is

        X(n+1) = (1-mu) X(n) + mu*t + mu*M(n+1),
        M_i = t_i*(zeta - lam)/lam - X_i*(xi_i - mu)/mu,

    i.e. the centered arrival/discharge innovations divided by the load
    step size mu. The identity is exact (floating point round-off only).
    """
    load = as_float_vector(load, net.n_links, "load")
    toll = as_float_vector(toll, net.n_links, "toll")
    xi = as_float_vector(xi, net.n_links, "xi")
    fractions = best_response_fractions(net, load, toll, beta)
    target = (lam / mu) * fractions
    return target * ((float(zeta) - lam) / lam) - load * ((xi - mu) / mu)


@dataclass(frozen=True)
class Trajectory:
    """Recorded (n, X, P) path of one run, optionally with the demand draws."""

    steps: np.ndarray
    loads: np.ndarray
    tolls: np.ndarray
    zetas: np.ndarray | None
    xis: np.ndarray | None
    seed: int
    record_every: int
    fingerprint: str = ""

    @property
    def n_links(self) -> int:
        return self.loads.shape[1]


def run(cfg: SimConfig) -> Trajectory:
    """Simulate the full horizon; deterministic given the config and seed.

    Records every record_every-th step starting at n = 0. When samples are
    recorded, a row holds the draws that produced its state; the n = 0 row
    has no draws and carries NaN.
    """
    state = initial_state(cfg)
    n_records = cfg.horizon // cfg.record_every + 1
    n = cfg.network.n_links
    steps = np.empty(n_records, dtype=np.int64)
    loads = np.empty((n_records, n))
    tolls = np.empty((n_records, n))
    zetas = np.full(n_records, np.nan) if cfg.record_samples else None
    xis = np.full((n_records, n), np.nan) if cfg.record_samples else None

    steps[0], loads[0], tolls[0] = 0, state.load, state.toll
    row = 1
    for k in range(1, cfg.horizon + 1):
        state, zeta, xi = _step_with_samples(state, cfg)
        if k % cfg.record_every == 0:
            steps[row], loads[row], tolls[row] = k, state.load, state.toll
            if cfg.record_samples:
                zetas[row] = zeta
                xis[row] = xi
            row += 1
    assert row == n_records
    return Trajectory(
        steps=steps,
        loads=loads,
        tolls=tolls,
        zetas=zetas,
        xis=xis,
        seed=cfg.seed,
        record_every=cfg.record_every,
        fingerprint=cfg.fingerprint(),
    )


def load_upper_bound(cfg: SimConfig, n) -> np.ndarray:
    """Per-link almost-sure bound X_i(0)*(1-xi_lo)^n + zeta_hi/xi_lo."""
    zeta_hi = cfg.demand.inflow.support[1]
    xi_lo = cfg.demand.outflow.support[0]
    n = np.asarray(n)
    decay = (1.0 - xi_lo) ** n
    if n.ndim == 0:
        return cfg.initial_load * decay + zeta_hi / xi_lo
    return cfg.initial_load[None, :] * decay[:, None] + zeta_hi / xi_lo
