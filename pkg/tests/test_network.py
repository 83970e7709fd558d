import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tollflow import LatencySpec, ParallelNetwork, paper_network, symmetric_network


def test_benchmark_family_values(net6):
    # ell_i(x) = i*x^2 + i, 1-based link ids map to 0-based indices
    assert net6.latency(2, 2.0) == 3 * 4 + 3
    for i in range(6):
        assert net6.latency(i, 0.0) == i + 1


def test_identity_latency():
    net = symmetric_network(2, ((1, 1.0),))
    assert net.latency(0, 7.0) == 7.0


def test_derivative_values(net6):
    assert net6.latency_derivative(1, 3.0) == 2 * 2 * 3
    quad = symmetric_network(2, ((2, 1.0),))
    assert quad.latency_derivative(0, 0.0) == 0.0


def test_constant_only_spec_rejected():
    with pytest.raises(ValueError, match="strictly increasing"):
        LatencySpec(((0, 3.0),))


def test_single_link_network_rejected():
    with pytest.raises(ValueError, match="at least 2"):
        ParallelNetwork((LatencySpec(((1, 1.0),)),))


def test_cost_values(net6):
    assert net6.cost(0, 1.0, 0.5) == 2.5
    assert net6.cost(3, 1.5, 0.0) == net6.latency(3, 1.5)


def test_cost_additive_in_toll_bitwise(net6):
    # exact for coarse dyadic tolls whose addition stays inside the
    # latency's binade: the addition is then exact and the subtraction
    # falls under the Sterbenz lemma
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        i = int(rng.integers(6))
        x = float(rng.uniform(0, 5))
        p1 = float(rng.integers(-32, 33)) / 64.0
        p2 = float(rng.integers(-32, 33)) / 64.0
        lat = net6.latency(i, x)
        binade = np.floor(np.log2(lat))
        if any(np.floor(np.log2(lat + q)) != binade for q in (p1, p2, p1 + p2)):
            continue
        checked += 1
        assert net6.cost(i, x, p1 + p2) == net6.cost(i, x, p1) + p2
        assert net6.cost(i, x, p1) - lat == p1


def test_cost_additive_in_toll_float(net6):
    rng = np.random.default_rng(1)
    for _ in range(200):
        i = int(rng.integers(6))
        x = float(rng.uniform(0, 5))
        p1, p2 = rng.uniform(-2, 2, 2)
        lhs = net6.cost(i, x, p1 + p2)
        rhs = net6.cost(i, x, p1) + p2
        assert lhs == pytest.approx(rhs, rel=1e-15)


def test_marginal_cost_values(net6):
    assert net6.marginal_cost(0, 1.0) == 2.0
    assert net6.marginal_cost(4, 0.0) == 0.0
    sym = symmetric_network(4, ((2, 1.0), (0, 1.0)))
    assert sym.marginal_cost(0, 2.0 / 4) == pytest.approx(0.5, abs=1e-15)


def test_index_and_domain_errors(net6):
    with pytest.raises(IndexError):
        net6.latency(6, 1.0)
    with pytest.raises(IndexError):
        net6.latency(-1, 1.0)
    with pytest.raises(ValueError):
        net6.latency(0, -0.5)
    with pytest.raises(ValueError):
        net6.marginal_cost(0, -1.0)


def test_vectorized_matches_scalar(net6):
    x = np.linspace(0.1, 2.0, 6)
    p = np.linspace(0.0, 1.0, 6)
    assert np.allclose(net6.latencies(x), [net6.latency(i, x[i]) for i in range(6)], rtol=0, atol=0)
    assert np.allclose(net6.derivatives(x), [net6.latency_derivative(i, x[i]) for i in range(6)])
    assert np.allclose(net6.costs(x, p), [net6.cost(i, x[i], p[i]) for i in range(6)])
    assert np.allclose(net6.marginal_costs(x), [net6.marginal_cost(i, x[i]) for i in range(6)])


@st.composite
def latency_specs(draw):
    n_terms = draw(st.integers(1, 3))
    terms = [(draw(st.integers(1, 4)), draw(st.floats(0.01, 10.0)))]
    for _ in range(n_terms - 1):
        terms.append((draw(st.integers(0, 4)), draw(st.floats(0.0, 10.0))))
    return LatencySpec(tuple(terms))


@settings(max_examples=60, deadline=None, derandomize=True)
@given(spec=latency_specs(), x=st.floats(1e-3, 10.0))
def test_latency_monotone_convex_and_derivative(spec, x):
    h = 1e-6 * max(1.0, x)
    left, mid, right = spec.value(x - h), spec.value(x), spec.value(x + h)
    assert right > left  # strictly increasing
    assert right - 2 * mid + left >= -1e-9 * max(1.0, mid)  # convex
    fd = (right - left) / (2 * h)
    assert spec.derivative(x) == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_derivative_fd_tight_grid(net6):
    # analytic derivative vs central difference, rel err < 1e-6 on [0, 10]
    for i in range(6):
        for x in np.linspace(0.01, 10.0, 50):
            h = 1e-6
            fd = (net6.latency(i, x + h) - net6.latency(i, x - h)) / (2 * h)
            assert abs(net6.latency_derivative(i, x) - fd) <= 1e-6 * max(1.0, abs(fd))
