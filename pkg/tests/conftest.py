"""Shared fixtures and frozen reference values.

The frozen vectors below were computed with independent oracles (per-link
log-space bisection on the stationarity systems, plus a scalar bisection
for the 2-link case) and cross-checked between solver routes to 1e-10
before freezing. Entries far below the solver tolerance are kept for
documentation; comparisons treat them as zero.
"""

import numpy as np
import pytest

from tollflow import EquilibriumParams, paper_network

# no-toll user equilibrium on the 6-link benchmark, beta=100
X_SUE0_D2 = np.array(
    [
        1.3528554666502939,
        0.64714447610846082,
        5.7241245896250265e-08,
        2.1294178369634461e-51,
        7.9215961381979690e-95,
        2.9468939485449697e-138,
    ]
)
X_SUE0_D4 = np.array(
    [
        1.8562861157389079,
        1.1070156375329605,
        0.69656296488824998,
        0.34013528183988101,
        1.5847621928742540e-24,
        5.8954357614176108e-68,
    ]
)

# marginal-cost toll fixed point and its loads, 6-link benchmark, beta=100
P_BAR_D2 = np.array(
    [
        2.0224053748891735,
        1.3593734112114473,
        0.69628834584171162,
        0.040095609499894831,
        1.1617188553745671e-83,
        1.9292384267969296e-170,
    ]
)
X_BAR_D2 = np.array(
    [
        1.0055857434573237,
        0.58296085014592569,
        0.34065827105808349,
        0.070795135337726092,
        1.0778306246720938e-42,
        4.0096118130621864e-86,
    ]
)
P_BAR_D4 = np.array(
    [
        3.8878685047777837,
        3.2241363152465823,
        2.5595905915556827,
        1.8948851620782343,
        1.2304016990345037,
        0.5669256635218225,
    ]
)
X_BAR_D4 = np.array(
    [
        1.3942504267128197,
        0.8977940068922552,
        0.6531450313107784,
        0.48668331105534224,
        0.3507708224802296,
        0.2173564015470604,
    ]
)

# 2-link instance ell = (x, 2x), p = 0, beta = 100, demand 1:
# scalar bisection on x1 - sigmoid residual (near the even-cost split 2/3)
TWO_LINK_SUE_X1 = 0.6643902642006356

# logit weight for a unit cost gap at beta = 1: 1 / (1 + e^-1)
LOGIT_UNIT_GAP = 0.7310585786300049


def sample_active_point(rng, jitter=0.02):
    """Interior loads near the cost-equalized manifold of the benchmark net.

    At beta = 100 the constant latency offsets otherwise push far links into
    denormal logit shares, where products and differences underflow; points
    near equal costs keep every link numerically alive.
    """
    level = float(rng.uniform(6.5, 9.0))
    i = np.arange(1, 7)
    x = np.sqrt(level / i - 1.0) + rng.uniform(-jitter, jitter, 6)
    p = rng.uniform(0.0, jitter, 6)
    return np.maximum(x, 0.01), p


def fd_jacobian(fn, v, step=1e-6):
    n = v.size
    out = np.zeros((n, n))
    for j in range(n):
        bump = np.zeros(n)
        bump[j] = step
        out[:, j] = (fn(v + bump) - fn(v - bump)) / (2 * step)
    return out


def assert_jacobian_close(analytic, fd, f_scale, step=1e-6, rel=1e-5):
    """Entrywise relative match, allowing the finite-difference noise floor.

    Central differences of a function with values of size f_scale carry an
    absolute noise of roughly eps*f_scale/step from rounding; derivatives
    are compared at rel accuracy on top of that floor.
    """
    noise = 64 * np.finfo(float).eps * f_scale / (2 * step)
    gap = np.abs(analytic - fd) - rel * np.abs(fd) - noise
    assert float(gap.max()) <= 0, f"jacobian mismatch, worst excess {gap.max():.3e}"


@pytest.fixture(scope="session")
def net6():
    return paper_network()

@pytest.fixture(scope="session")
def params_d2():
    return EquilibriumParams(beta=100.0, demand=2.0)


@pytest.fixture(scope="session")
def params_d4():
    return EquilibriumParams(beta=100.0, demand=4.0)
