"""tollflow: adaptive marginal-cost tolling on parallel-link networks.

Simulation of the two-timescale stochastic load/toll dynamics, its
continuous-time limit, and the associated fixed points: logit user
equilibrium, entropy-regularized social optimum, and the marginal-cost
toll that makes the two coincide.
"""

from .diagnostics import (
    ConvergenceStats,
    ensemble_run,
    neighborhood_probability,
    squared_error_series,
    tail_mse,
    total_latency,
)
from .equilibrium import (
    EquilibriumParams,
    EquilibriumSolution,
    SensitivityReport,
    SolverError,
    best_response_fractions,
    h_jacobian_p,
    h_jacobian_x,
    monotonicity_witness,
    sensitivity_report,
    socially_optimal_load,
    solve_equilibrium_toll,
    solve_sue,
    solve_sue_dual,
    solve_sue_kkt,
    sue_price_sensitivity,
    target_load,
)
from .network import LatencySpec, ParallelNetwork, paper_network, symmetric_network
from .ode import (
    CooperativityReport,
    IntegrationError,
    OdeConfig,
    OdeTrajectory,
    check_cooperativity,
    coupled_vector_field,
    integrate_coupled,
    integrate_fast,
    integrate_slow,
)
from .simulation import (
    BoundedDistribution,
    DemandModel,
    RngStreams,
    SimConfig,
    SimState,
    Trajectory,
    degenerate_dist,
    initial_state,
    load_upper_bound,
    martingale_term,
    run,
    sample_inflow,
    sample_outflows,
    scaled_beta_dist,
    step,
    uniform_dist,
)

__version__ = "0.1.0"
