import numpy as np
import pytest

from tollflow import (
    DemandModel,
    EquilibriumParams,
    SimConfig,
    ensemble_run,
    neighborhood_probability,
    paper_network,
    run,
    socially_optimal_load,
    solve_sue_kkt,
    squared_error_series,
    tail_mse,
    total_latency,
)
from tollflow.diagnostics import resolve_max_workers
from tollflow.simulation import Trajectory


def small_cfg(**overrides) -> SimConfig:
    base = dict(
        network=paper_network(),
        demand=DemandModel.default(0.1, 0.05),
        beta=100.0,
        toll_step=0.0015,
        horizon=300,
        seed=0,
    )
    base.update(overrides)
    return SimConfig(**base)


def pinned_trajectory(load, toll, n=5) -> Trajectory:
    return Trajectory(
        steps=np.arange(n),
        loads=np.tile(load, (n, 1)),
        tolls=np.tile(toll, (n, 1)),
        zetas=None,
        xis=None,
        seed=0,
        record_every=1,
    )


def test_squared_error_zero_at_reference():
    load, toll = np.array([1.0, 2.0]), np.array([0.5, 0.25])
    traj = pinned_trajectory(load, toll)
    series = squared_error_series(traj, (load, toll))
    assert np.array_equal(series, np.zeros(5))


def test_squared_error_hand_value():
    traj = pinned_trajectory(np.array([1.0, 1.0]), np.array([0.0, 0.0]), n=1)
    series = squared_error_series(traj, (np.array([0.5, 1.0]), np.array([0.25, 0.0])))
    assert series[0] == pytest.approx(0.25 + 0.0625, abs=1e-15)


def test_squared_error_shape_mismatch():
    traj = pinned_trajectory(np.ones(2), np.ones(2))
    with pytest.raises(ValueError, match="shape"):
        squared_error_series(traj, (np.ones(3), np.ones(3)))


def test_tail_mse_values():
    assert tail_mse([3.0, 3.0, 3.0, 3.0]) == 3.0
    assert tail_mse([4.0, 2.0, 0.0, 0.0], tail_fraction=0.5) == 0.0
    assert tail_mse([1.0, 5.0], tail_fraction=0.5) == 5.0
    with pytest.raises(ValueError):
        tail_mse([])
    with pytest.raises(ValueError):
        tail_mse([1.0], tail_fraction=0.0)


def test_neighborhood_probability_limits():
    series = [np.array([0.5, 0.1, 0.2, 0.3])]
    assert neighborhood_probability(series, 1e9) == 0.0
    assert neighborhood_probability(series, 1e-12) == 1.0
    with pytest.raises(ValueError):
        neighborhood_probability(series, 0.0)


def test_neighborhood_probability_markov_inequality_pooled():
    # pooled empirical Markov bound holds with zero slack by construction
    rng = np.random.default_rng(5)
    series = [rng.uniform(0, 2, 50) for _ in range(7)]
    pooled = np.concatenate([s[-13:] for s in series])  # tail fraction 0.25 of 50 -> 13
    for delta in (0.1, 0.5, 1.0):
        prob = neighborhood_probability(series, delta)
        assert prob <= pooled.mean() / delta + 1e-12


def test_total_latency_values(net6):
    assert total_latency(net6, np.zeros(6)) == 0.0
    # uniform third: sum_i i*((1/3)^3 + 1/3) = 21 * 10/27
    val = total_latency(net6, np.full(6, 1.0 / 3.0))
    assert val == pytest.approx(210.0 / 27.0, abs=1e-12)


def test_tolling_reduces_total_latency(net6):
    for demand in (2.0, 4.0):
        params = EquilibriumParams(beta=100.0, demand=demand)
        no_toll = solve_sue_kkt(net6, np.zeros(6), params)
        social = socially_optimal_load(net6, params)
        assert total_latency(net6, social) < total_latency(net6, no_toll)


def test_ensemble_single_seed_matches_run(net6, params_d2):
    from tollflow import solve_equilibrium_toll

    ref = solve_equilibrium_toll(net6, params_d2)
    cfg = small_cfg()
    stats = ensemble_run(cfg, [0], reference=ref, deltas=(0.25,))
    traj = run(cfg)
    series = squared_error_series(traj, ref)
    assert stats.per_seed_tail_mse[0] == pytest.approx(tail_mse(series), abs=0)
    assert stats.ensemble_mean == stats.per_seed_tail_mse[0]
    assert stats.ensemble_std == 0.0


def test_ensemble_duplicate_seed_identical_rows(net6, params_d2):
    from tollflow import solve_equilibrium_toll

    ref = solve_equilibrium_toll(net6, params_d2)
    stats = ensemble_run(small_cfg(), [4, 4, 4], reference=ref)
    assert stats.per_seed_tail_mse[0] == stats.per_seed_tail_mse[1] == stats.per_seed_tail_mse[2]


def test_ensemble_deterministic_and_thread_capped(net6, params_d2, monkeypatch):
    from tollflow import solve_equilibrium_toll

    ref = solve_equilibrium_toll(net6, params_d2)
    a = ensemble_run(small_cfg(), range(4), reference=ref, deltas=(0.1, 1.0))
    monkeypatch.setenv("TOLLFLOW_THREADS", "1")
    b = ensemble_run(small_cfg(), range(4), reference=ref, deltas=(0.1, 1.0))
    assert np.array_equal(a.per_seed_tail_mse, b.per_seed_tail_mse)
    assert a.neighborhood_prob == b.neighborhood_prob
    assert a.seeds == (0, 1, 2, 3)


def test_resolve_max_workers(monkeypatch):
    monkeypatch.setenv("TOLLFLOW_THREADS", "2")
    assert resolve_max_workers(10) == 2
    assert resolve_max_workers(1) == 1
    monkeypatch.setenv("TOLLFLOW_THREADS", "junk")
    with pytest.raises(ValueError):
        resolve_max_workers(4)
    monkeypatch.setenv("TOLLFLOW_THREADS", "0")
    with pytest.raises(ValueError):
        resolve_max_workers(4)


def test_ensemble_needs_seeds(net6):
    with pytest.raises(ValueError, match="seed"):
        ensemble_run(small_cfg(), [])
