import numpy as np
import pytest

from tollflow import (
    BoundedDistribution,
    DemandModel,
    LatencySpec,
    ParallelNetwork,
    RngStreams,
    SimConfig,
    degenerate_dist,
    initial_state,
    load_upper_bound,
    martingale_term,
    paper_network,
    run,
    sample_inflow,
    sample_outflows,
    scaled_beta_dist,
    step,
    uniform_dist,
)
from tollflow.equilibrium import best_response_fractions

TWO_LINK = ParallelNetwork((LatencySpec(((1, 1.0),)), LatencySpec(((1, 2.0),))))


def s1_config(**overrides) -> SimConfig:
    base = dict(
        network=paper_network(),
        demand=DemandModel.default(0.1, 0.05),
        beta=100.0,
        toll_step=0.0015,
        horizon=2000,
        seed=0,
    )
    base.update(overrides)
    return SimConfig(**base)


# ---------------------------------------------------------------------------
# distributions and demand model
# ---------------------------------------------------------------------------


def test_distribution_means_analytic():
    assert uniform_dist(0.05, 0.15).mean == pytest.approx(0.1, abs=1e-15)
    assert degenerate_dist(0.3).mean == 0.3
    assert scaled_beta_dist(2.0, 3.0, 0.0, 1.0).mean == pytest.approx(0.4, abs=1e-15)
    assert scaled_beta_dist(1.0, 1.0, 0.2, 0.4).mean == pytest.approx(0.3, abs=1e-15)


def test_distribution_validation():
    with pytest.raises(ValueError):
        BoundedDistribution("uniform", (0.3, 0.1))
    with pytest.raises(ValueError):
        BoundedDistribution("triangular", (0.0, 1.0))
    with pytest.raises(ValueError):
        scaled_beta_dist(-1.0, 2.0, 0.0, 1.0)


def test_demand_model_support_invariants():
    with pytest.raises(ValueError, match="inflow"):
        DemandModel(uniform_dist(0.0, 0.2), uniform_dist(0.02, 0.08))
    with pytest.raises(ValueError, match="outflow"):
        DemandModel(uniform_dist(0.05, 0.15), uniform_dist(0.5, 1.0))
    model = DemandModel.default(0.1, 0.05)
    assert model.mean_inflow == pytest.approx(0.1, abs=1e-12)
    assert model.mean_outflow == pytest.approx(0.05, abs=1e-12)
    assert model.demand == pytest.approx(2.0, abs=1e-12)


def test_demand_model_default_clamps_high_mu():
    model = DemandModel.default(0.1, 0.8)
    lo, hi = model.outflow.support
    assert hi < 1.0 and lo > 0.0
    assert model.mean_outflow == pytest.approx(0.8, abs=1e-12)


def test_sampling_means_and_bounds():
    model = DemandModel.default(0.1, 0.05)
    streams = RngStreams(7, 6)
    draws = np.array([sample_inflow(model, streams) for _ in range(100_000)])
    assert draws.min() >= 0.05 and draws.max() <= 0.15
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - 0.1) < 3 * se

    degen = DemandModel(degenerate_dist(0.1), degenerate_dist(0.05))
    assert all(sample_inflow(degen, streams) == 0.1 for _ in range(10))
    assert np.all(sample_outflows(degen, streams, 6) == 0.05)


def test_outflow_independence_across_links():
    model = DemandModel.default(0.1, 0.05)
    streams = RngStreams(11, 3)
    draws = np.array([sample_outflows(model, streams, 3) for _ in range(100_000)])
    corr = np.corrcoef(draws.T)
    off = corr[~np.eye(3, dtype=bool)]
    assert np.max(np.abs(off)) < 0.01
    assert draws.min() >= 0.025 and draws.max() <= 0.075


def test_streams_stable_under_added_links():
    # adding a link must not perturb the arrival stream or existing links
    small, big = RngStreams(5, 2), RngStreams(5, 3)
    assert [small.inflow.uniform() for _ in range(5)] == [
        big.inflow.uniform() for _ in range(5)
    ]
    for k in range(2):
        assert small.outflow[k].uniform() == big.outflow[k].uniform()


def test_scaled_beta_sampling_bounds():
    dist = scaled_beta_dist(2.0, 5.0, 0.02, 0.08)
    gen = np.random.Generator(np.random.Philox(key=np.array([1, 2], dtype=np.uint64)))
    draws = np.array([dist.sample(gen) for _ in range(20_000)])
    assert draws.min() >= 0.02 and draws.max() <= 0.08
    se = draws.std() / np.sqrt(draws.size)
    assert abs(draws.mean() - dist.mean) < 4 * se


# ---------------------------------------------------------------------------
# the update
# ---------------------------------------------------------------------------


def test_step_frozen_tolls_at_zero_step():
    cfg = s1_config(toll_step=0.0, initial_toll=np.array([0.3] * 6))
    state = initial_state(cfg)
    for _ in range(10):
        state = step(state, cfg)
    assert np.array_equal(state.toll, np.array([0.3] * 6))


def test_step_worked_two_link_example():
    # X=(1,1), P=0, ell=(x,2x), beta=1, zeta=0.1, xi=0.05: the cheap link
    # receives the logit share 1/(1+e^-1) of the arrival mass
    demand = DemandModel(degenerate_dist(0.1), degenerate_dist(0.05))
    cfg = SimConfig(
        network=TWO_LINK,
        demand=demand,
        beta=1.0,
        toll_step=0.0,
        horizon=1,
        initial_load=np.array([1.0, 1.0]),
        seed=0,
    )
    state = step(initial_state(cfg), cfg)
    share = 1.0 / (1.0 + np.exp(-1.0))
    assert state.load[0] == pytest.approx(0.95 + 0.1 * share, abs=1e-12)
    assert state.load[1] == pytest.approx(0.95 + 0.1 * (1 - share), abs=1e-12)
    assert state.n == 1


def test_step_degenerate_demand_matches_mean_recursion():
    # with point-mass demand the chain is the deterministic mean update
    demand = DemandModel(degenerate_dist(0.1), degenerate_dist(0.05))
    cfg = s1_config(demand=demand, horizon=50, toll_step=0.001)
    net, mu = cfg.network, 0.05
    x, p = np.zeros(6), np.zeros(6)
    for _ in range(50):
        target = (0.1 / 0.05) * best_response_fractions(net, x, p, cfg.beta)
        x, p = (1 - mu) * x + mu * target, (1 - 0.001) * p + 0.001 * net.marginal_costs(x)
    state = initial_state(cfg)
    for _ in range(50):
        state = step(state, cfg)
    assert np.allclose(state.load, x, atol=1e-12)
    assert np.allclose(state.toll, p, atol=1e-12)


def test_step_reads_prestep_state_for_both_updates():
    # toll update must use the load before the step, not after
    demand = DemandModel(degenerate_dist(0.1), degenerate_dist(0.05))
    cfg = s1_config(demand=demand, horizon=1, initial_load=np.array([1.0] * 6), toll_step=0.5)
    state = initial_state(cfg)
    new = step(state, cfg)
    expected_toll = 0.5 * np.zeros(6) + 0.5 * cfg.network.marginal_costs(np.ones(6))
    assert np.allclose(new.toll, expected_toll, atol=0)
    assert not np.allclose(new.load, np.ones(6))


def test_martingale_zero_at_mean_draws(net6):
    m = martingale_term(net6, np.ones(6), np.zeros(6), 0.1, np.full(6, 0.05), 0.1, 0.05, 100.0)
    assert np.allclose(m, 0.0, atol=1e-15)


def test_martingale_decomposition_identity(net6):
    # X + mu*(target - X) + mu*M reproduces the raw update exactly
    rng = np.random.default_rng(4)
    lam, mu, beta = 0.1, 0.05, 100.0
    worst = 0.0
    for _ in range(2000):
        x = rng.uniform(0.0, 3.0, 6)
        p = rng.uniform(0.0, 3.0, 6)
        zeta = rng.uniform(0.05, 0.15)
        xi = rng.uniform(0.025, 0.075, 6)
        m = martingale_term(net6, x, p, zeta, xi, lam, mu, beta)
        frac = best_response_fractions(net6, x, p, beta)
        raw = x + frac * zeta - x * xi
        recon = x + mu * ((lam / mu) * frac - x) + mu * m
        worst = max(worst, float(np.max(np.abs(raw - recon))))
    assert worst < 1e-12


def test_martingale_second_moment_bound(net6):
    # E|M|^2 <= K (1 + X^2) with K from the innovation supports and 1/mu^2
    lam, mu, beta = 0.1, 0.05, 100.0
    model = DemandModel.default(lam, mu)
    (zl, zu), (xl, xu) = model.inflow.support, model.outflow.support
    K = 2.0 * max((zu - zl) ** 2, (xu - xl) ** 2) / mu**2
    rng = np.random.default_rng(8)
    streams = RngStreams(3, 6)
    for _ in range(20):
        x = rng.uniform(0.0, 3.0, 6)
        p = rng.uniform(0.0, 2.0, 6)
        draws = np.array(
            [
                martingale_term(
                    net6, x, p, sample_inflow(model, streams),
                    sample_outflows(model, streams, 6), lam, mu, beta,
                )
                for _ in range(2000)
            ]
        )
        second_moment = (draws**2).mean(axis=0)
        assert np.all(second_moment <= K * (1.0 + x**2))


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def test_run_deterministic_and_spacing():
    cfg = s1_config(horizon=400, record_every=5)
    a, b = run(cfg), run(cfg)
    assert np.array_equal(a.loads, b.loads)
    assert np.array_equal(a.tolls, b.tolls)
    assert np.array_equal(a.steps, b.steps)
    assert a.fingerprint == b.fingerprint
    assert np.all(np.diff(a.steps) == 5)
    assert a.steps[0] == 0 and a.steps[-1] == 400


def test_run_seed_changes_trajectory():
    a = run(s1_config(horizon=200))
    b = run(s1_config(horizon=200, seed=1))
    assert not np.array_equal(a.loads, b.loads)


def test_run_records_samples_with_nan_first_row():
    cfg = s1_config(horizon=50, record_samples=True)
    traj = run(cfg)
    assert np.isnan(traj.zetas[0]) and np.all(np.isnan(traj.xis[0]))
    assert np.all(np.isfinite(traj.zetas[1:]))
    assert np.all((traj.zetas[1:] >= 0.05) & (traj.zetas[1:] <= 0.15))
    assert np.all((traj.xis[1:] >= 0.025) & (traj.xis[1:] <= 0.075))


def test_run_conservation_identity():
    # X(n+1) - X(n) equals arrivals minus discharge, recomputed from samples
    cfg = s1_config(horizon=300, record_samples=True)
    traj = run(cfg)
    net, beta = cfg.network, cfg.beta
    for k in range(1, traj.steps.size):
        frac = best_response_fractions(net, traj.loads[k - 1], traj.tolls[k - 1], beta)
        expected = traj.loads[k - 1] + frac * traj.zetas[k] - traj.loads[k - 1] * traj.xis[k]
        assert np.allclose(traj.loads[k], expected, atol=1e-15)


def test_run_load_bound_and_positivity():
    cfg = s1_config(horizon=20_000)
    traj = run(cfg)
    bound = load_upper_bound(cfg, traj.steps)
    assert np.all(traj.loads <= bound)
    assert np.all(traj.loads[1:] > 0)
    assert np.all(traj.tolls >= 0)


def test_config_validation():
    with pytest.raises(ValueError, match="toll step"):
        s1_config(toll_step=2.0)
    with pytest.raises(ValueError, match="horizon"):
        s1_config(horizon=0)
    with pytest.raises(ValueError, match="nonnegative"):
        s1_config(initial_load=np.array([-1.0, 0, 0, 0, 0, 0]))
    with pytest.raises(ValueError, match="seed"):
        s1_config(seed=-3)
