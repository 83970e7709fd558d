"""Convergence statistics and social-cost accounting for simulation runs."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumParams, EquilibriumSolution, solve_equilibrium_toll
from .network import ParallelNetwork
from .simulation import SimConfig, Trajectory, run

THREADS_ENV = "TOLLFLOW_THREADS"


def _reference_vectors(reference) -> tuple[np.ndarray, np.ndarray]:
    """Accept an EquilibriumSolution or an explicit (load, toll) pair."""
    if isinstance(reference, EquilibriumSolution):
        return reference.sue_load, reference.toll
    load, toll = reference
    return np.asarray(load, dtype=float), np.asarray(toll, dtype=float)


def squared_error_series(traj: Trajectory, reference) -> np.ndarray:
    """Per-recorded-step squared distance ||X - x_ref||^2 + ||P - p_ref||^2."""
    load_ref, toll_ref = _reference_vectors(reference)
    if load_ref.shape != (traj.n_links,) or toll_ref.shape != (traj.n_links,):
        raise ValueError(
            f"reference vectors must have shape ({traj.n_links},), got "
            f"{load_ref.shape} and {toll_ref.shape}"
        )
    return ((traj.loads - load_ref) ** 2).sum(axis=1) + ((traj.tolls - toll_ref) ** 2).sum(axis=1)


def tail_mse(series, tail_fraction: float = 0.25) -> float:
    """Mean of the last tail_fraction of a recorded series."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("series is empty")
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    start = series.size - max(1, int(round(series.size * tail_fraction)))
    return float(series[start:].mean())


def neighborhood_probability(series_list, delta: float, tail_fraction: float = 0.25) -> float:
    """Fraction of pooled (seed, tail-step) squared distances at or above delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    hits = 0
    total = 0
    for series in series_list:
        series = np.asarray(series, dtype=float)
        start = series.size - max(1, int(round(series.size * tail_fraction)))
        tail = series[start:]
        hits += int((tail >= delta).sum())
        total += tail.size
    if total == 0:
        raise ValueError("no tail samples")
    return hits / total


def total_latency(net: ParallelNetwork, x) -> float:
    """Social cost sum_i x_i * ell_i(x_i)."""
    x = np.asarray(x, dtype=float)
    return float(np.dot(x, net.latencies(x)))


@dataclass(frozen=True)
class ConvergenceStats:
    """Ensemble summary of squared distance to the reference fixed point."""

    seeds: tuple[int, ...]
    per_seed_tail_mse: np.ndarray
    per_seed_final_load_err: np.ndarray
    per_seed_final_toll_err: np.ndarray
    ensemble_mean: float
    ensemble_std: float
    neighborhood_prob: dict[float, float]
    tail_fraction: float

    @property
    def standard_error(self) -> float:
        return self.ensemble_std / np.sqrt(len(self.seeds))


def resolve_max_workers(n_tasks: int) -> int:
    """Thread cap: TOLLFLOW_THREADS if set, else the CPU count, at most n_tasks."""
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            cap = int(env)
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
        if cap < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {cap}")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(cap, n_tasks))


def ensemble_run(
    cfg: SimConfig,
    seeds,
    *,
    reference=None,
    deltas=(),
    tail_fraction: float = 0.25,
) -> ConvergenceStats:
    """Run one seed list and aggregate; deterministic given the seed list.

    The reference defaults to the equilibrium of the config's own network,
    dispersion, and steady demand. Runs execute in parallel (bounded by
    TOLLFLOW_THREADS); aggregation folds in seed order.
    """
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    if reference is None:
        params = EquilibriumParams(beta=cfg.beta, demand=cfg.demand.demand)
        reference = solve_equilibrium_toll(cfg.network, params)
    load_ref, toll_ref = _reference_vectors(reference)

    def one(seed: int) -> Trajectory:
        return run(cfg.with_seed(seed))

    with ThreadPoolExecutor(max_workers=resolve_max_workers(len(seeds))) as pool:
        trajectories = list(pool.map(one, seeds))

    series_list = [squared_error_series(traj, (load_ref, toll_ref)) for traj in trajectories]
    per_tail = np.array([tail_mse(s, tail_fraction) for s in series_list])
    final_load = np.array(
        [float(np.max(np.abs(traj.loads[-1] - load_ref))) for traj in trajectories]
    )
    final_toll = np.array(
        [float(np.max(np.abs(traj.tolls[-1] - toll_ref))) for traj in trajectories]
    )
    probs = {
        float(d): neighborhood_probability(series_list, float(d), tail_fraction) for d in deltas
    }
    std = float(per_tail.std(ddof=1)) if len(seeds) > 1 else 0.0
    return ConvergenceStats(
        seeds=seeds,
        per_seed_tail_mse=per_tail,
        per_seed_final_load_err=final_load,
        per_seed_final_toll_err=final_toll,
        ensemble_mean=float(per_tail.mean()),
        ensemble_std=std,
        neighborhood_prob=probs,
        tail_fraction=tail_fraction,
    )
