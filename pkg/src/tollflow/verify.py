"""Self-contained property suite behind the ``verify`` CLI command.

Each check re-states one module invariant with reduced sample counts so the
whole table runs in well under a minute; the pytest acceptance suite runs
the same properties at full strength. A check returns its name, pass/fail,
and a margin (how far inside the tolerance the worst sample landed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diagnostics, ode, simulation
from .config import PRESET_TABLE, preset_config
from .equilibrium import (
    EquilibriumParams,
    h_jacobian_p,
    h_jacobian_x,
    monotonicity_witness,
    socially_optimal_load,
    solve_equilibrium_toll,
    solve_sue,
    solve_sue_dual,
    solve_sue_kkt,
    sue_price_sensitivity,
    _target,
)
from .network import LatencySpec, ParallelNetwork, paper_network


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


def _random_network(rng: np.random.Generator) -> ParallelNetwork:
    n = int(rng.integers(2, 9))
    links = []
    for _ in range(n):
        links.append(
            LatencySpec(
                (
                    (0, float(rng.uniform(0.0, 2.0))),
                    (1, float(rng.uniform(0.1, 0.6))),
                    (2, float(rng.uniform(0.0, 0.3))),
                )
            )
        )
    return ParallelNetwork(tuple(links))


def _random_instance(rng: np.random.Generator):
    net = _random_network(rng)
    params = EquilibriumParams(
        beta=float(np.exp(rng.uniform(np.log(1.0), np.log(200.0)))),
        demand=float(rng.uniform(0.5, 5.0)),
    )
    p = rng.uniform(0.0, 10.0, net.n_links)
    return net, params, p


def check_network_shape() -> CheckResult:
    net = paper_network()
    worst = 0.0
    xs = np.linspace(0.0, 10.0, 41)
    for i in range(net.n_links):
        vals = [net.latency(i, float(x)) for x in xs]
        if not all(b > a for a, b in zip(vals, vals[1:])):
            return CheckResult("network/monotone-convex", False, 0.0, f"link {i} not increasing")
        second = np.diff(vals, 2)
        if np.any(second < -1e-12):
            return CheckResult("network/monotone-convex", False, float(second.min()), f"link {i}")
        # analytic derivative vs central difference
        for x in xs[1:]:
            h = 1e-6
            fd = (net.latency(i, float(x + h)) - net.latency(i, float(x - h))) / (2 * h)
            an = net.latency_derivative(i, float(x))
            worst = max(worst, abs(an - fd) / max(1.0, abs(fd)))
    return CheckResult("network/monotone-convex", worst < 1e-6, 1e-6 - worst)


def check_cost_additivity() -> CheckResult:
    # bitwise for coarse dyadic tolls whose addition stays inside the
    # latency's binade (exact addition, then Sterbenz subtraction)
    net = paper_network()
    rng = np.random.default_rng(1)
    worst = 0.0
    checked = 0
    while checked < 100:
        i = int(rng.integers(net.n_links))
        x = float(rng.uniform(0, 5))
        p = float(rng.integers(-32, 33)) / 64.0
        latency = net.latency(i, x)
        if np.floor(np.log2(latency)) != np.floor(np.log2(latency + p)):
            continue
        checked += 1
        worst = max(worst, abs(net.cost(i, x, p) - latency - p))
    return CheckResult("network/cost-additivity", worst == 0.0, -worst)


def check_solver_agreement(n_instances: int = 15) -> CheckResult:
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(n_instances):
        net, params, p = _random_instance(rng)
        xa = solve_sue(net, p, params)
        xb = solve_sue_dual(net, p, params)
        xc = solve_sue_kkt(net, p, params)
        worst = max(worst, float(np.max(np.abs(xa - xb))), float(np.max(np.abs(xa - xc))))
    return CheckResult("equilibrium/solver-agreement", worst < 1e-8, 1e-8 - worst)


def check_shift_invariance() -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=20.0, demand=2.0)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        p = rng.uniform(0, 3, net.n_links)
        shift = float(rng.uniform(-5, 5))
        xa = solve_sue_kkt(net, p, params)
        xb = solve_sue_kkt(net, p + shift, params)
        worst = max(worst, float(np.max(np.abs(xa - xb))))
    return CheckResult("equilibrium/toll-shift-invariance", worst < 1e-10, 1e-10 - worst)


def check_theorem_consistency() -> CheckResult:
    worst = 0.0
    for demand in (2.0, 4.0):
        params = EquilibriumParams(beta=100.0, demand=demand)
        sol = solve_equilibrium_toll(paper_network(), params)
        worst = max(worst, sol.residuals["theorem_consistency"])
        if sol.residuals["toll_fixed_point"] >= 1e-9:
            return CheckResult("equilibrium/fixed-point", False, sol.residuals["toll_fixed_point"])
    return CheckResult("equilibrium/fixed-point", worst < 1e-6, 1e-6 - worst)


def check_monotonicity(n_pairs: int = 20) -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=2.0)
    rng = np.random.default_rng(5)
    worst = -np.inf
    for _ in range(n_pairs):
        p = rng.uniform(0, 10, net.n_links)
        q = rng.uniform(0, 10, net.n_links)
        worst = max(worst, monotonicity_witness(net, p, q, params))
    return CheckResult("equilibrium/monotonicity", worst < 0.0, -worst)


def _active_point(rng):
    # near the cost-equalized manifold all links carry resolvable logit share
    level = float(rng.uniform(6.5, 9.0))
    idx = np.arange(1, 7)
    x = np.sqrt(level / idx - 1.0) + rng.uniform(-0.02, 0.02, 6)
    return np.maximum(x, 0.01), rng.uniform(0.0, 0.02, 6)


def check_jacobians(n_points: int = 10) -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=2.0)
    rng = np.random.default_rng(11)
    # allow the finite-difference rounding floor eps*f/step on top of 1e-5
    noise = 64 * np.finfo(float).eps * params.demand / 2e-6
    worst = -np.inf
    for _ in range(n_points):
        x, p = _active_point(rng)
        for which, fn in (("x", h_jacobian_x), ("p", h_jacobian_p)):
            analytic = fn(net, x, p, params)
            fd = np.zeros_like(analytic)
            for j in range(net.n_links):
                bump = np.zeros(net.n_links)
                bump[j] = 1e-6
                if which == "x":
                    hp = _target(net, x + bump, p, params)
                    hm = _target(net, x - bump, p, params)
                else:
                    hp = _target(net, x, p + bump, params)
                    hm = _target(net, x, p - bump, params)
                fd[:, j] = (hp - hm) / 2e-6
            gap = np.abs(analytic - fd) - 1e-5 * np.abs(fd) - noise
            worst = max(worst, float(gap.max()))
    return CheckResult("equilibrium/jacobians-vs-fd", worst <= 0, -worst)


def check_sensitivity_signs() -> CheckResult:
    # demand 4 keeps all six links on loads where differences resolve
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=4.0)
    ref = solve_equilibrium_toll(net, params)
    rng = np.random.default_rng(13)
    col_worst = 0.0
    for _ in range(5):
        p = np.maximum(ref.toll + rng.uniform(-0.2, 0.2, net.n_links), 0.0)
        jac = sue_price_sensitivity(net, p, params)
        off = jac[~np.eye(net.n_links, dtype=bool)]
        if np.any(np.diag(jac) >= 0) or np.any(off <= 0):
            return CheckResult("equilibrium/price-sensitivity-signs", False, 0.0, "sign pattern")
        col_worst = max(col_worst, float(np.max(np.abs(jac.sum(axis=0)))))
    return CheckResult("equilibrium/price-sensitivity-signs", col_worst < 1e-6, 1e-6 - col_worst)


def check_beta_sweep() -> CheckResult:
    net = ParallelNetwork((LatencySpec(((1, 1.0),)), LatencySpec(((1, 2.0),))))
    values = [
        diagnostics.total_latency(
            net, socially_optimal_load(net, EquilibriumParams(beta=b, demand=1.0))
        )
        for b in (10.0, 100.0, 1000.0)
    ]
    decreasing = all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    margin = values[0] - values[-1]
    return CheckResult("equilibrium/entropy-weight-sweep", decreasing, margin)


def check_martingale_identity(n_states: int = 1000) -> CheckResult:
    net = paper_network()
    lam, mu, beta = 0.1, 0.05, 100.0
    rng = np.random.default_rng(23)
    worst = 0.0
    from .equilibrium import best_response_fractions

    for _ in range(n_states):
        x = rng.uniform(0.0, 3.0, net.n_links)
        p = rng.uniform(0.0, 3.0, net.n_links)
        zeta = rng.uniform(0.05, 0.15)
        xi = rng.uniform(0.025, 0.075, net.n_links)
        m = simulation.martingale_term(net, x, p, zeta, xi, lam, mu, beta)
        frac = best_response_fractions(net, x, p, beta)
        raw = x + frac * zeta - x * xi
        target = (lam / mu) * frac
        reconstructed = x + mu * (target - x) + mu * m
        worst = max(worst, float(np.max(np.abs(raw - reconstructed))))
    return CheckResult("dynamics/martingale-identity", worst < 1e-12, 1e-12 - worst)


def check_load_bound(horizon: int = 20_000) -> CheckResult:
    cfg = preset_config("s1").sim_config()
    cfg = simulation.SimConfig(
        network=cfg.network,
        demand=cfg.demand,
        beta=cfg.beta,
        toll_step=cfg.toll_step,
        horizon=horizon,
        seed=3,
    )
    traj = simulation.run(cfg)
    bound = simulation.load_upper_bound(cfg, traj.steps)
    gap = float(np.min(bound - traj.loads))
    positive_after_first = np.all(traj.loads[1:] > 0)
    nonneg_toll = np.all(traj.tolls >= 0)
    ok = gap >= 0 and bool(positive_after_first) and bool(nonneg_toll)
    return CheckResult("dynamics/load-and-toll-bounds", ok, gap)


def check_determinism() -> CheckResult:
    cfg = preset_config("s1").sim_config()
    a = simulation.run(cfg)
    b = simulation.run(cfg)
    same = (
        np.array_equal(a.loads, b.loads)
        and np.array_equal(a.tolls, b.tolls)
        and np.array_equal(a.steps, b.steps)
    )
    return CheckResult("dynamics/determinism", same, 0.0)


def check_ode_fixed_point() -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=2.0)
    sol = solve_equilibrium_toll(net, params)
    dx, dp = ode.coupled_vector_field(sol.sue_load, sol.toll, 0.03, net, params)
    worst = max(float(np.max(np.abs(dx))) * 0.03, float(np.max(np.abs(dp))))
    return CheckResult("ode/fixed-point-residual", worst < 1e-8, 1e-8 - worst)


def check_fast_flow(n_starts: int = 5) -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=2.0)
    rng = np.random.default_rng(31)
    worst = 0.0
    for _ in range(n_starts):
        p = rng.uniform(0.0, 2.0, net.n_links)
        x0 = rng.uniform(0.01, 2.0, net.n_links)
        traj = ode.integrate_fast(x0, p, net, params, dt=1e-2, horizon=30.0)
        ref = solve_sue_kkt(net, p, params)
        worst = max(worst, float(np.max(np.abs(traj.loads[-1] - ref))))
    return CheckResult("ode/fast-flow-convergence", worst < 1e-6, 1e-6 - worst)


def check_slow_flow(n_starts: int = 2) -> CheckResult:
    net = paper_network()
    params = EquilibriumParams(beta=100.0, demand=2.0)
    ref = solve_equilibrium_toll(net, params)
    rng = np.random.default_rng(37)
    worst = 0.0
    for _ in range(n_starts):
        p0 = rng.uniform(0.0, 5.0, net.n_links)
        traj = ode.integrate_slow(p0, net, params, dt=2e-2, horizon=25.0)
        worst = max(worst, float(np.max(np.abs(traj.tolls[-1] - ref.toll))))
    return CheckResult("ode/slow-flow-convergence", worst < 1e-6, 1e-6 - worst)


def check_cooperativity_reports() -> CheckResult:
    net = paper_network()
    rng = np.random.default_rng(41)
    # points near equal costs keep finite differences of all entries resolvable
    level = rng.uniform(6.5, 9.0, 10)
    idx = np.arange(1, 7)
    points = [np.sqrt(k / idx - 1.0) + rng.uniform(-0.005, 0.005, 6) for k in level]
    params2 = EquilibriumParams(beta=100.0, demand=2.0)
    fast = ode.check_cooperativity(
        "fast", net, params2, (np.full(6, 0.05), np.full(6, 3.0)),
        toll=np.zeros(6), points=points,
    )
    # demand 4 keeps all links on loads where slow-field differences resolve
    params4 = EquilibriumParams(beta=100.0, demand=4.0)
    ref = solve_equilibrium_toll(net, params4)
    lo = np.maximum(ref.toll - 0.2, 0.01)
    slow = ode.check_cooperativity("slow", net, params4, (lo, ref.toll + 0.2), n_samples=5)
    ok = fast.all_hold and slow.all_hold
    return CheckResult(
        "ode/cooperativity", ok, min(fast.offdiag_min, slow.offdiag_min),
        f"fast offdiag {fast.offdiag_min:.2e}, slow offdiag {slow.offdiag_min:.2e}",
    )


def check_markov_consistency() -> CheckResult:
    cfg = preset_config("s1").sim_config()
    stats = diagnostics.ensemble_run(cfg, range(5), deltas=(0.1, 0.25, 1.0))
    worst = -np.inf
    for delta, prob in stats.neighborhood_prob.items():
        worst = max(worst, prob - stats.ensemble_mean / delta)
    return CheckResult("diagnostics/markov-consistency", worst <= 1e-12, -worst)


def check_efficiency_ordering() -> CheckResult:
    net = paper_network()
    worst = np.inf
    for demand in (2.0, 4.0):
        params = EquilibriumParams(beta=100.0, demand=demand)
        no_toll = solve_sue_kkt(net, np.zeros(net.n_links), params)
        social = socially_optimal_load(net, params)
        worst = min(
            worst,
            diagnostics.total_latency(net, no_toll) - diagnostics.total_latency(net, social),
        )
    return CheckResult("diagnostics/tolling-efficiency", worst > 0.0, worst)


def check_preset_table() -> CheckResult:
    expected = {
        "s1": (0.1, 0.0015),
        "s2": (0.2, 0.0015),
        "s3": (0.1, 0.0),
        "s4": (0.2, 0.0),
    }
    if PRESET_TABLE != expected:
        return CheckResult("cli/preset-table", False, 0.0, "preset table drifted")
    cfg = preset_config("s1")
    ok = (
        cfg.network.n_links == 6
        and cfg.beta == 100.0
        and cfg.horizon == 2000
        and cfg.demand.mean_outflow == 0.05
        and cfg.network.latency(2, 2.0) == 3 * 4 + 3
    )
    return CheckResult("cli/preset-table", ok, 0.0)


def check_config_roundtrip() -> CheckResult:
    from .config import format_config, parse_config

    cfg = preset_config("s2")
    back = parse_config(format_config(cfg))
    same = format_config(back) == format_config(cfg)
    return CheckResult("cli/config-roundtrip", same, 0.0)


ALL_CHECKS = (
    check_network_shape,
    check_cost_additivity,
    check_solver_agreement,
    check_shift_invariance,
    check_theorem_consistency,
    check_monotonicity,
    check_jacobians,
    check_sensitivity_signs,
    check_beta_sweep,
    check_martingale_identity,
    check_load_bound,
    check_determinism,
    check_ode_fixed_point,
    check_fast_flow,
    check_slow_flow,
    check_cooperativity_reports,
    check_markov_consistency,
    check_efficiency_ordering,
    check_preset_table,
    check_config_roundtrip,
)


def run_all() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
