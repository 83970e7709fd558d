"""Fixed-point theory for logit routing under tolls.

Steady-state demand d = lambda/mu is split across links by a logit
(perturbed best response) rule with dispersion beta; the induced mean load
target is

    target_i(x, p) = d * exp(-beta*c_i(x_i, p_i)) / sum_j exp(-beta*c_j),

with c_i = ell_i + p_i. Three nested fixed points are computed here:

* the user equilibrium x_bar(p), the load vector fixed under target(.,p);
* the welfare benchmark y_beta minimizing total latency plus entropy/beta
  on the demand simplex;
* the marginal-cost toll p_bar, fixed under p -> x_bar(p) * ell'(x_bar(p)).

At p_bar the user equilibrium coincides with the welfare benchmark, and
that identity is this module's main cross-check.

Three independent solver routes are provided for the user equilibrium:

* ``solve_sue``      damped fixed-point iteration on the load map, with a
                     stability-capped damping factor;
* ``solve_sue_dual`` bisection on the Lagrange multiplier of the entropy
                     program, with per-link log-space bisection (slow but
                     unconditionally convergent; serves as the oracle);
* ``solve_sue_kkt``  safeguarded Newton on the same stationarity system
                     (fast, warm-startable; used inside iterative loops).

All loads are solved in log space where needed, so links whose equilibrium
share is denormally small (sharp logit on asymmetric links) still carry
correct relative values and usable sensitivities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import as_float_vector, check_positive_scalar
from .network import ParallelNetwork

_LOG_FLOOR = np.log(1e-300)  # per-link lower bracket for log-load bisection


class SolverError(RuntimeError):
    """Raised when an iterative solver fails to meet its tolerance."""

    def __init__(self, message: str, residual: float, history: list[float] | None = None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.history = history or []


@dataclass(frozen=True)
class EquilibriumParams:
    """Dispersion and steady-state demand shared by all equilibrium solves."""

    beta: float
    demand: float

    def __post_init__(self):
        object.__setattr__(self, "beta", check_positive_scalar(self.beta, "beta"))
        object.__setattr__(self, "demand", check_positive_scalar(self.demand, "demand"))


@dataclass(frozen=True)
class EquilibriumSolution:
    """Joint fixed point plus the welfare benchmark and solver metadata."""

    sue_load: np.ndarray
    toll: np.ndarray
    social_load: np.ndarray
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        demand = float(self.sue_load.sum())
        if abs(self.social_load.sum() - demand) > 1e-9:
            raise ValueError("social_load does not conserve demand")
        if np.any(self.sue_load < 0) or np.any(self.social_load < 0) or np.any(self.toll < 0):
            raise ValueError("equilibrium quantities must be nonnegative")


@dataclass(frozen=True)
class SensitivityReport:
    """Analytic load-map Jacobians and the equilibrium price sensitivity."""

    jac_x: np.ndarray
    jac_p: np.ndarray
    sue_price_jacobian: np.ndarray


# ---------------------------------------------------------------------------
# logit allocation and the mean load target
# ---------------------------------------------------------------------------


def best_response_fractions(net: ParallelNetwork, x, p, beta: float) -> np.ndarray:
    """Logit split of arriving demand given current loads and tolls.

    Softmax of -beta*cost, computed max-subtracted so large beta*cost never
    overflows. beta = 0 returns the uniform split.
    """
    beta = float(beta)
    if not np.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    x = as_float_vector(x, net.n_links, "load")
    if np.any(x < 0):
        raise ValueError("load must be componentwise nonnegative")
    p = as_float_vector(p, net.n_links, "toll")
    with np.errstate(over="ignore", invalid="ignore"):
        # polynomial overflow at astronomical loads propagates as NaN and is
        # caught by the callers that can say where it happened
        z = -beta * net.costs(x, p)
        z -= z.max()
        e = np.exp(z)
        return e / e.sum()


def target_load(net: ParallelNetwork, x, p, lam: float, mu: float, beta: float) -> np.ndarray:
    """Mean steady load the routing rule pulls toward: d * fractions, d = lam/mu."""
    lam = check_positive_scalar(lam, "lam")
    mu = float(mu)
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    return (lam / mu) * best_response_fractions(net, x, p, beta)


def _target(net, x, p, params: EquilibriumParams) -> np.ndarray:
    return params.demand * best_response_fractions(net, x, p, params.beta)


# ---------------------------------------------------------------------------
# user equilibrium solvers
# ---------------------------------------------------------------------------


def solve_sue(
    net: ParallelNetwork,
    p,
    params: EquilibriumParams,
    *,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 2_000_000,
    x0=None,
) -> np.ndarray:
    """User equilibrium via damped fixed-point iteration on the load map.

    Iterates x <- (1-g)x + g*target(x, p). The damping g is the requested
    value capped each iteration at 1.8/(1 + beta*max_i target_i*ell_i'(x_i));
    the cap is a spectral bound on the load-map Jacobian, so the iteration
    is linearly stable for every state the solve passes through. Sharp logit
    (large beta) instances are therefore slow but safe.
    """
    p = as_float_vector(p, net.n_links, "toll")
    d = params.demand
    x = np.full(net.n_links, d / net.n_links) if x0 is None else as_float_vector(x0, net.n_links, "x0")
    h = _target(net, x, p, params)
    for _ in range(max_iter):
        res = float(np.max(np.abs(x - h)))
        if res < tol:
            return x
        curvature = params.beta * float(np.max(h * net.derivatives(x)))
        g = min(damping, 1.8 / (1.0 + curvature))
        x = (1.0 - g) * x + g * h
        h = _target(net, x, p, params)
    raise SolverError("solve_sue did not converge", res)


def _bisect_log_loads(g_of_u, n_links: int, demand: float, inner_iter: int) -> np.ndarray:
    """Per-link log-space bisection for an increasing stationarity function.

    Finds u with g(u) = 0 per link inside [log floor, log demand]; links whose
    root lies above the demand cap are clamped there (only possible while the
    outer multiplier is still off), links below the floor collapse to it.
    """
    lo = np.full(n_links, _LOG_FLOOR)
    hi = np.full(n_links, np.log(demand))
    g_hi = g_of_u(hi)
    clamp_hi = g_hi <= 0
    g_lo = g_of_u(lo)
    clamp_lo = g_lo >= 0
    for _ in range(inner_iter):
        mid = 0.5 * (lo + hi)
        g = g_of_u(mid)
        lo = np.where(g < 0, mid, lo)
        hi = np.where(g >= 0, mid, hi)
    u = 0.5 * (lo + hi)
    u = np.where(clamp_hi, np.log(demand), u)
    u = np.where(clamp_lo, _LOG_FLOOR, u)
    return np.exp(u)


def solve_sue_dual(
    net: ParallelNetwork,
    p,
    params: EquilibriumParams,
    *,
    demand_tol: float = 1e-11,
    max_outer: int = 120,
    inner_iter: int = 110,
) -> np.ndarray:
    """User equilibrium via bisection on the entropy program's multiplier.

    For a fixed multiplier delta each load solves the scalar stationarity
    equation  ln y + beta*(ell(y) + p) + beta*delta + 1 = 0, whose left side
    is strictly increasing in y: one bisection per link. The total load is
    decreasing in delta, so an outer bisection matches the demand. This
    route shares no code path with solve_sue and acts as its oracle.
    """
    p = as_float_vector(p, net.n_links, "toll")
    d, beta = params.demand, params.beta

    def loads_at(delta: float) -> np.ndarray:
        def g_of_u(u):
            y = np.exp(u)
            return u + beta * (net.latencies(y) + p) + beta * delta + 1.0

        return _bisect_log_loads(g_of_u, net.n_links, d, inner_iter)

    dvec = np.full(net.n_links, d)
    uvec = np.full(net.n_links, d / net.n_links)
    delta_lo = float(np.min(-(1.0 + np.log(d)) / beta - (net.latencies(dvec) + p)))
    delta_hi = float(np.max(-(1.0 + np.log(d / net.n_links)) / beta - (net.latencies(uvec) + p)))
    total = np.nan
    for _ in range(max_outer):
        mid = 0.5 * (delta_lo + delta_hi)
        y = loads_at(mid)
        total = float(y.sum())
        if abs(total - d) < demand_tol:
            return y
        if total > d:
            delta_lo = mid
        else:
            delta_hi = mid
    raise SolverError("solve_sue_dual bracket failure", abs(total - d))


def solve_sue_kkt(
    net: ParallelNetwork,
    p,
    params: EquilibriumParams,
    *,
    warm: tuple[np.ndarray, float] | None = None,
    demand_tol: float = 1e-12,
    return_state: bool = False,
):
    """User equilibrium via safeguarded Newton on the stationarity system.

    Works on log-loads u = ln y: the per-link equation
    G(u) = u + beta*(ell(e^u) + p) + beta*delta + 1 is increasing and convex
    in u, and the demand mismatch is driven to zero by a Newton update on
    the multiplier delta, safeguarded by an analytic bracket. Orders of
    magnitude faster than the other routes and warm-startable, which the
    slow-flow integrator and the toll solver rely on.

    warm: optional (u, delta) from a previous solve at nearby tolls.
    """
    p = as_float_vector(p, net.n_links, "toll")
    d, beta = params.demand, params.beta
    n = net.n_links

    dvec = np.full(n, d)
    uvec = np.full(n, d / n)
    delta_lo = float(np.min(-(1.0 + np.log(d)) / beta - (net.latencies(dvec) + p)))
    delta_hi = float(np.max(-(1.0 + np.log(d / n)) / beta - (net.latencies(uvec) + p)))

    if warm is None:
        u = np.full(n, np.log(d / n))
        delta = 0.5 * (delta_lo + delta_hi)
    else:
        u = np.asarray(warm[0], dtype=float).copy()
        delta = float(np.clip(warm[1], delta_lo, delta_hi))

    total = np.nan
    for _ in range(200):
        # inner Newton on u; G is increasing and convex, steps are clipped
        for _ in range(200):
            y = np.exp(u)
            g = u + beta * (net.latencies(y) + p) + beta * delta + 1.0
            if float(np.max(np.abs(g))) < 1e-12:
                break
            gp = 1.0 + beta * net.derivatives(y) * y
            u = u - np.clip(g / gp, -50.0, 50.0)
        y = np.exp(u)
        total = float(y.sum())
        if abs(total - d) < demand_tol * max(1.0, d):
            return (y, (u, delta)) if return_state else y
        if total > d:
            delta_lo = delta
        else:
            delta_hi = delta
        gp = 1.0 + beta * net.derivatives(y) * y
        slope = float(np.sum(-beta * y / gp))
        candidate = delta - (total - d) / slope
        if not delta_lo < candidate < delta_hi:
            candidate = 0.5 * (delta_lo + delta_hi)
        if delta_hi - delta_lo < 1e-18 * max(1.0, abs(delta_hi) + abs(delta_lo)):
            return (y, (u, delta)) if return_state else y
        delta = candidate
    raise SolverError("solve_sue_kkt did not converge", abs(total - d))


# ---------------------------------------------------------------------------
# welfare benchmark and the equilibrium toll
# ---------------------------------------------------------------------------


def socially_optimal_load(
    net: ParallelNetwork,
    params: EquilibriumParams,
    *,
    demand_tol: float = 1e-11,
    max_outer: int = 120,
    inner_iter: int = 110,
) -> np.ndarray:
    """Minimizer of total latency plus entropy/beta on the demand simplex.

    Stationarity per link: ell(y) + y*ell'(y) + (1+ln y)/beta + delta = 0,
    strictly increasing in y; solved by the same dual-bisection scheme as
    solve_sue_dual.
    """
    d, beta = params.demand, params.beta

    def loads_at(delta: float) -> np.ndarray:
        def g_of_u(u):
            y = np.exp(u)
            return net.latencies(y) + y * net.derivatives(y) + (1.0 + u) / beta + delta

        return _bisect_log_loads(g_of_u, net.n_links, d, inner_iter)

    dvec = np.full(net.n_links, d)
    uvec = np.full(net.n_links, d / net.n_links)
    delta_lo = float(
        np.min(-(net.latencies(dvec) + dvec * net.derivatives(dvec) + (1.0 + np.log(d)) / beta))
    )
    delta_hi = float(
        np.max(
            -(
                net.latencies(uvec)
                + uvec * net.derivatives(uvec)
                + (1.0 + np.log(d / net.n_links)) / beta
            )
        )
    )
    total = np.nan
    for _ in range(max_outer):
        mid = 0.5 * (delta_lo + delta_hi)
        y = loads_at(mid)
        total = float(y.sum())
        if abs(total - d) < demand_tol:
            return y
        if total > d:
            delta_lo = mid
        else:
            delta_hi = mid
    raise SolverError("socially_optimal_load bracket failure", abs(total - d))


def solve_equilibrium_toll(
    net: ParallelNetwork,
    params: EquilibriumParams,
    *,
    damping: float = 0.5,
    tol: float = 1e-9,
    max_iter: int = 100_000,
) -> EquilibriumSolution:
    """Marginal-cost toll fixed point p = x_bar(p) * ell'(x_bar(p)).

    Damped iteration p <- (1-eta)p + eta*z(p) from p = 0, the discrete shadow
    of the slow toll flow; eta halves whenever the fixed-point residual grows
    (keeps steep latency families stable) and recovers geometrically. Inner
    user-equilibrium solves are warm-started Newton solves.
    """
    p = np.zeros(net.n_links)
    x, state = solve_sue_kkt(net, p, params, return_state=True)
    eta = damping
    history: list[float] = []
    prev_res = np.inf
    for it in range(max_iter):
        z = x * net.derivatives(x)
        res = float(np.max(np.abs(p - z)))
        history.append(res)
        if res < tol:
            break
        eta = max(eta / 2.0, 1e-3) if res > prev_res else min(eta * 1.1, damping)
        prev_res = res
        p = (1.0 - eta) * p + eta * z
        x, state = solve_sue_kkt(net, p, params, warm=state, return_state=True)
    else:
        raise SolverError("solve_equilibrium_toll did not converge", res, history)

    social = socially_optimal_load(net, params)
    sue_residual = float(np.max(np.abs(x - _target(net, x, p, params))))
    solution = EquilibriumSolution(
        sue_load=x,
        toll=p,
        social_load=social,
        residuals={
            "toll_fixed_point": res,
            "sue_fixed_point": sue_residual,
            "demand_gap": abs(float(x.sum()) - params.demand),
            "theorem_consistency": float(np.max(np.abs(x - social))),
        },
        iterations={"toll": it},
    )
    if abs(float(x.sum()) - params.demand) > 1e-9:
        raise SolverError("equilibrium load does not conserve demand", abs(x.sum() - params.demand))
    return solution


# ---------------------------------------------------------------------------
# Jacobians and sensitivities
# ---------------------------------------------------------------------------


def h_jacobian_x(net: ParallelNetwork, x, p, params: EquilibriumParams) -> np.ndarray:
    """Analytic Jacobian of the load target in the loads.

    Entrywise beta * ell_j'(x_j) * t_i * (t_j/d - delta_ij) with t the target
    load; off-diagonals are strictly positive wherever the target is, the
    matrix annihilates the cost-equalizing direction, and its spectrum is
    real and nonpositive.
    """
    x = as_float_vector(x, net.n_links, "load")
    p = as_float_vector(p, net.n_links, "toll")
    t = _target(net, x, p, params)
    weighted = net.derivatives(x) * t
    return params.beta * (np.outer(t, weighted) / params.demand - np.diag(weighted))


def h_jacobian_p(net: ParallelNetwork, x, p, params: EquilibriumParams) -> np.ndarray:
    """Analytic Jacobian of the load target in the tolls (no ell' factors)."""
    x = as_float_vector(x, net.n_links, "load")
    p = as_float_vector(p, net.n_links, "toll")
    t = _target(net, x, p, params)
    return params.beta * (np.outer(t, t) / params.demand - np.diag(t))


def monotonicity_witness(net: ParallelNetwork, p, p_alt, params: EquilibriumParams) -> float:
    """Inner product <x_bar(p) - x_bar(p'), p - p'>.

    Strictly negative whenever p - p' is not a uniform shift; a uniform
    shift cancels in the logit weights, leaves the equilibrium unchanged,
    and yields exactly zero.
    """
    p = as_float_vector(p, net.n_links, "p")
    p_alt = as_float_vector(p_alt, net.n_links, "p_alt")
    xa = solve_sue_kkt(net, p, params)
    xb = solve_sue_kkt(net, p_alt, params)
    return float(np.dot(xa - xb, p - p_alt))


def sue_price_sensitivity(
    net: ParallelNetwork, p, params: EquilibriumParams, *, step: float = 1e-5
) -> np.ndarray:
    """Central finite-difference Jacobian of p -> x_bar(p).

    Column k differentiates in toll k. Expected structure at interior
    points: negative diagonal, positive off-diagonals, columns summing to
    zero (demand conservation under toll perturbations). Uses the log-space
    Newton solver so even denormally loaded links produce signed entries.
    """
    p = as_float_vector(p, net.n_links, "toll")
    _, warm = solve_sue_kkt(net, p, params, return_state=True)
    n = net.n_links
    jac = np.zeros((n, n))
    for k in range(n):
        bump = np.zeros(n)
        bump[k] = step
        x_plus = solve_sue_kkt(net, p + bump, params, warm=warm)
        x_minus = solve_sue_kkt(net, p - bump, params, warm=warm)
        jac[:, k] = (x_plus - x_minus) / (2.0 * step)
    return jac


def sensitivity_report(net: ParallelNetwork, p, params: EquilibriumParams) -> SensitivityReport:
    """Bundle of the analytic Jacobians at x_bar(p) and the price sensitivity."""
    x = solve_sue_kkt(net, p, params)
    return SensitivityReport(
        jac_x=h_jacobian_x(net, x, p, params),
        jac_p=h_jacobian_p(net, x, p, params),
        sue_price_jacobian=sue_price_sensitivity(net, p, params),
    )
