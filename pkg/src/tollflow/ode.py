"""Continuous-time limit of the two-timescale dynamics.

In slow time t (one unit of t per 1/a discrete steps) the coupled system is

    eps * dx/dt = target(x, p) - x
          dp/dt = -p + x * ell'(x)

with eps the ratio of the toll step to the mean discharge rate. The fast
subsystem relaxes loads to the user equilibrium x_bar(p) at frozen tolls;
the slow subsystem then drives tolls to the marginal-cost fixed point.

All flows are integrated with classical fourth-order Runge-Kutta. The fast
subsystem is stiff when beta is large (the load-target Jacobian has real
eigenvalues down to -beta * max_i target_i * ell_i'), so each requested step
is internally split into equal substeps sized by that analytic bound; the
rule is deterministic and state-dependent, not error-adaptive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector, check_positive_scalar
from .equilibrium import EquilibriumParams, _target, solve_sue_kkt
from .network import ParallelNetwork

_RK4_REAL_AXIS = 1.8  # conservative share of the RK4 real-axis stability interval


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step_index: int):
        super().__init__(f"{message} at step {step_index}")
        self.step_index = step_index


@dataclass(frozen=True)
class OdeConfig:
    """Coupled-integration settings in slow-time units."""

    epsilon: float
    dt: float
    horizon: float
    initial_load: np.ndarray | float = 0.0
    initial_toll: np.ndarray | float = 0.0

    def __post_init__(self):
        eps = check_positive_scalar(self.epsilon, "epsilon")
        dt = check_positive_scalar(self.dt, "dt")
        if dt > eps / 10.0:
            raise ValueError(f"dt must be <= epsilon/10 = {eps / 10:.3g} to resolve the fast subsystem")
        check_positive_scalar(self.horizon, "horizon")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "dt", dt)
        object.__setattr__(self, "horizon", float(self.horizon))


@dataclass(frozen=True)
class OdeTrajectory:
    times: np.ndarray
    loads: np.ndarray
    tolls: np.ndarray


@dataclass(frozen=True)
class CooperativityReport:
    """Numerical witnesses for the four cooperative-field conditions."""

    field: str
    offdiag_min: float          # smallest off-diagonal Jacobian entry over samples
    irreducible: bool           # Jacobian sign pattern strongly connected
    f_at_zero_min: float        # smallest component of the field at the origin
    dominating_point_found: bool
    dominating_margin: float    # how far below zero the field sits at the dominating point
    n_samples: int

    @property
    def all_hold(self) -> bool:
        return (
            self.offdiag_min >= -1e-9
            and self.irreducible
            and self.f_at_zero_min >= -1e-12
            and self.dominating_point_found
        )


def coupled_vector_field(x, p, epsilon: float, net: ParallelNetwork, params: EquilibriumParams):
    """(dx/dt, dp/dt) of the coupled system in slow time."""
    x = as_float_vector(x, net.n_links, "x")
    p = as_float_vector(p, net.n_links, "p")
    epsilon = check_positive_scalar(epsilon, "epsilon")
    dx = (_target(net, x, p, params) - x) / epsilon
    dp = -p + x * net.derivatives(x)
    return dx, dp


def _fast_curvature(net, x, p, params) -> float:
    """Spectral bound on the fast-field Jacobian magnitude at a state."""
    x = np.maximum(x, 0.0)
    t = _target(net, x, p, params)
    return 1.0 + params.beta * float(np.max(t * net.derivatives(x)))


def _rk4_step(f, state, dt):
    k1 = f(state)
    k2 = f(state + 0.5 * dt * k1)
    k3 = f(state + 0.5 * dt * k2)
    k4 = f(state + dt * k3)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_coupled(cfg: OdeConfig, net: ParallelNetwork, params: EquilibriumParams) -> OdeTrajectory:
    """RK4 trajectory of the coupled system on the grid t = k*dt.

    Each grid step is split into equal substeps no longer than the stability
    bound eps-scaled fast curvature allows, evaluated at the step's start.
    """
    n = net.n_links
    x = as_float_vector(cfg.initial_load, n, "initial_load")
    p = as_float_vector(cfg.initial_toll, n, "initial_toll")
    n_steps = int(round(cfg.horizon / cfg.dt))

    def f(state):
        # clip loads for stage evaluations; RK4 stages may graze zero
        xs = np.maximum(state[:n], 0.0)
        dx = (_target(net, xs, state[n:], params) - xs) / cfg.epsilon
        dp = -state[n:] + xs * net.derivatives(xs)
        return np.concatenate([dx, dp])

    times = np.empty(n_steps + 1)
    loads = np.empty((n_steps + 1, n))
    tolls = np.empty((n_steps + 1, n))
    times[0], loads[0], tolls[0] = 0.0, x, p
    state = np.concatenate([x, p])
    for k in range(n_steps):
        rate = _fast_curvature(net, state[:n], state[n:], params) / cfg.epsilon + 4.0
        if not np.isfinite(rate):
            raise IntegrationError("non-finite state in coupled integration", k)
        n_sub = max(1, int(np.ceil(cfg.dt * rate / _RK4_REAL_AXIS)))
        h = cfg.dt / n_sub
        for _ in range(n_sub):
            state = _rk4_step(f, state, h)
        if not np.all(np.isfinite(state)):
            raise IntegrationError("non-finite state in coupled integration", k)
        times[k + 1] = (k + 1) * cfg.dt
        loads[k + 1] = state[:n]
        tolls[k + 1] = state[n:]
    return OdeTrajectory(times=times, loads=loads, tolls=tolls)


def integrate_fast(
    x0,
    p,
    net: ParallelNetwork,
    params: EquilibriumParams,
    dt: float = 1e-2,
    horizon: float = 25.0,
) -> OdeTrajectory:
    """Load relaxation dx/dt = target(x, p) - x at frozen tolls (fast time)."""
    n = net.n_links
    x = as_float_vector(x0, n, "x0")
    p = as_float_vector(p, n, "p")
    dt = check_positive_scalar(dt, "dt")
    n_steps = int(round(horizon / dt))

    def f(state):
        xs = np.maximum(state, 0.0)
        return _target(net, xs, p, params) - xs

    times = np.empty(n_steps + 1)
    loads = np.empty((n_steps + 1, n))
    times[0], loads[0] = 0.0, x
    for k in range(n_steps):
        rate = _fast_curvature(net, x, p, params)
        if not np.isfinite(rate):
            raise IntegrationError("non-finite state in fast integration", k)
        n_sub = max(1, int(np.ceil(dt * rate / _RK4_REAL_AXIS)))
        h = dt / n_sub
        for _ in range(n_sub):
            x = _rk4_step(f, x, h)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite state in fast integration", k)
        times[k + 1] = (k + 1) * dt
        loads[k + 1] = x
    return OdeTrajectory(times=times, loads=loads, tolls=np.tile(p, (n_steps + 1, 1)))


def integrate_slow(
    p0,
    net: ParallelNetwork,
    params: EquilibriumParams,
    dt: float = 1e-2,
    horizon: float = 25.0,
) -> OdeTrajectory:
    """Toll relaxation dp/dt = -p + x_bar(p) * ell'(x_bar(p)) (slow time).

    The equilibrium load is re-solved at every stage evaluation, warm-started
    from the previous solve. The slow field's Jacobian is mild (order of the
    latency degree), so no stability substepping is applied.
    """
    n = net.n_links
    p = as_float_vector(p0, n, "p0")
    dt = check_positive_scalar(dt, "dt")
    n_steps = int(round(horizon / dt))
    warm: dict[str, object] = {"state": None}

    def z(pvec):
        x, state = solve_sue_kkt(net, pvec, params, warm=warm["state"], return_state=True)
        warm["state"] = state
        return x * net.derivatives(x)

    def f(pvec):
        return -pvec + z(pvec)

    times = np.empty(n_steps + 1)
    tolls = np.empty((n_steps + 1, n))
    loads = np.empty((n_steps + 1, n))
    times[0], tolls[0] = 0.0, p
    loads[0] = solve_sue_kkt(net, p, params)
    for k in range(n_steps):
        p = _rk4_step(f, p, dt)
        if not np.all(np.isfinite(p)):
            raise IntegrationError("non-finite state in slow integration", k)
        times[k + 1] = (k + 1) * dt
        tolls[k + 1] = p
        loads[k + 1] = solve_sue_kkt(net, p, params, warm=warm["state"])
    return OdeTrajectory(times=times, loads=loads, tolls=tolls)


# ---------------------------------------------------------------------------
# cooperativity checks
# ---------------------------------------------------------------------------


def _strongly_connected(pattern: np.ndarray) -> bool:
    """Strong connectivity of the nonzero off-diagonal pattern (irreducibility)."""
    n = pattern.shape[0]
    adjacency = pattern != 0.0
    np.fill_diagonal(adjacency, False)

    def reaches_all(adj) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            node = frontier.pop()
            for nxt in np.nonzero(adj[node])[0]:
                if nxt not in seen:
                    seen.add(int(nxt))
                    frontier.append(int(nxt))
        return len(seen) == n

    return reaches_all(adjacency) and reaches_all(adjacency.T)


def check_cooperativity(
    field: str,
    net: ParallelNetwork,
    params: EquilibriumParams,
    sample_domain: tuple,
    n_samples: int = 50,
    *,
    toll=None,
    seed: int = 0,
    fd_step: float | None = None,
    points=None,
) -> CooperativityReport:
    """Sample-based witnesses for the cooperative-field conditions.

    field "fast" checks the load relaxation at frozen tolls (requires toll);
    field "slow" checks the toll relaxation through the equilibrium map.
    sample_domain is a (lo, hi) box in the field's own variable; it must sit
    inside the positive orthant. Jacobians are taken by central finite
    differences, independent of the analytic formulas. For sharp logit
    (large beta) the box should keep all links at comparable costs, else
    finite differences of the dominant entries round to zero; alternatively
    pass explicit sample points via points=.
    """
    if field not in ("fast", "slow"):
        raise ValueError("field must be 'fast' or 'slow'")
    lo = as_float_vector(sample_domain[0], net.n_links, "sample_domain lo")
    hi = as_float_vector(sample_domain[1], net.n_links, "sample_domain hi")
    if np.any(lo <= 0) or np.any(hi < lo):
        raise ValueError("sample_domain must be a box inside the positive orthant")
    n = net.n_links
    d = params.demand

    if field == "fast":
        if toll is None:
            raise ValueError("the fast field is defined at a frozen toll; pass toll=")
        toll = as_float_vector(toll, n, "toll")
        step = fd_step if fd_step is not None else 1e-6

        def f(v):
            v = np.maximum(v, 0.0)
            return _target(net, v, toll, params) - v

        # any point above the reachable band dominates: target < d componentwise
        dominating = np.full(n, max(float(hi.max()), d) + 1.0)
    else:
        step = fd_step if fd_step is not None else 1e-5
        warm: dict[str, object] = {"state": None}

        def f(v):
            x, state = solve_sue_kkt(net, v, params, warm=warm["state"], return_state=True)
            warm["state"] = state
            return -v + x * net.derivatives(x)

        # tolls above the largest possible marginal cost push the field negative
        dvec = np.full(n, d)
        dominating = np.full(n, d * float(np.max(net.derivatives(dvec))) + 1.0)
        dominating = np.maximum(dominating, hi + 1.0)

    rng = np.random.default_rng(seed)
    if points is None:
        points = [rng.uniform(lo, hi) for _ in range(int(n_samples))]
    else:
        points = [as_float_vector(pt, n, "sample point") for pt in points]
        n_samples = len(points)
    offdiag_min = np.inf
    irreducible = True
    for point in points:
        jac = np.empty((n, n))
        for j in range(n):
            bump = np.zeros(n)
            bump[j] = step
            jac[:, j] = (f(point + bump) - f(point - bump)) / (2.0 * step)
        off = jac[~np.eye(n, dtype=bool)]
        offdiag_min = min(offdiag_min, float(off.min()))
        if not _strongly_connected(jac):
            irreducible = False

    f_at_zero = f(np.zeros(n))
    f_at_dominating = f(dominating)
    return CooperativityReport(
        field=field,
        offdiag_min=float(offdiag_min),
        irreducible=irreducible,
        f_at_zero_min=float(f_at_zero.min()),
        dominating_point_found=bool(np.all(f_at_dominating < 0)),
        dominating_margin=float(f_at_dominating.max()),
        n_samples=int(n_samples),
    )
