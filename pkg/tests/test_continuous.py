import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate as quad_integrate

from statenet.continuous import (
    FlowProblem,
    FlowState,
    FlowStatus,
    IdentityTransform,
    Integrator,
    OddPowerTransform,
    SinhTransform,
    continuous_lyapunov,
    euler_step,
    find_saddle,
    flow_rhs,
    integrate,
    project_box,
    rhs_norm,
)
from statenet.core import PrivateCosts, bounded_confidence
from statenet.models import build_preset, two_agent_saddle

G1 = bounded_confidence(1.0)


def two_agent(lam=0.0, x=(0.0, 2.0)):
    L = np.array([[0.0, lam], [lam, 0.0]])
    return FlowState(np.array(x), L)


def test_project_box_examples():
    assert project_box(0.5, 1.0) == 0.0
    assert project_box(-2.0, 0.5) == -2.0
    assert project_box(-1.0, 0.0) == 0.0
    assert project_box(0.7, 0.0) == 0.7
    with pytest.raises(AssertionError):
        project_box(1.0, 1.5)


def test_rhs_examples():
    dx, dlam = flow_rhs(two_agent(), FlowProblem(G1))
    np.testing.assert_array_equal(dx, [0.0, 0.0])
    assert dlam[0, 1] == dlam[1, 0] == pytest.approx(1.5)
    dx, dlam = flow_rhs(two_agent(1.0), FlowProblem(G1))
    np.testing.assert_allclose(dx, [4.0, -4.0])
    assert dlam[0, 1] == 0.0
    dx, _ = flow_rhs(two_agent(1.0), FlowProblem(G1, halved=True))
    np.testing.assert_allclose(dx, [2.0, -2.0])


def test_rhs_floor_blocks_and_costs_drive_states():
    f = PrivateCosts(c2=0.5, c1=np.array([1.0, -1.0]))
    dx, dlam = flow_rhs(two_agent(0.0, (0.0, 0.5)), FlowProblem(G1, f))
    assert not dlam.any()
    np.testing.assert_allclose(dx, -f.d1(np.array([0.0, 0.5])))


def test_one_euler_step_example():
    s1 = euler_step(two_agent(), FlowProblem(G1), 0.1)
    assert s1.lam[0, 1] == pytest.approx(0.15, abs=1e-12)
    np.testing.assert_array_equal(s1.x, [0.0, 2.0])


def test_saddle_is_stationary():
    p = build_preset("two_agent_flow")
    xbar, lbar = p.saddle
    s = FlowState(xbar, lbar)
    assert rhs_norm(s, p.flow) < 1e-12
    traj = integrate(s, p.flow, dt=1e-2, T=1.0)
    np.testing.assert_allclose(traj.states, np.broadcast_to(xbar, traj.states.shape), atol=1e-12)
    assert continuous_lyapunov(s, p.saddle, p.flow) == 0.0


@pytest.mark.parametrize("halved", [False, True])
def test_analytic_saddle_cases(halved):
    for c, eps in ((0.2, 1.0), (1.0, 1.0), (3.0, 0.5), (10.0, 1.0)):
        xbar, lbar = two_agent_saddle(c, eps, halved)
        f = PrivateCosts(c2=0.5, c1=np.array([c, -c]))
        problem = FlowProblem(G1 if eps == 1.0 else bounded_confidence(eps), f, halved=halved)
        assert rhs_norm(FlowState(xbar, lbar), problem) < 1e-12
        assert np.all((lbar >= 0) & (lbar <= 1))


def test_unit_instance_saddle_value():
    xbar, lbar = two_agent_saddle(1.0, 1.0)
    np.testing.assert_allclose(xbar, [-0.5, 0.5])
    assert lbar[0, 1] == pytest.approx(0.25)


def test_identity_bregman_is_half_squared_distance():
    p = FlowProblem(G1)
    s = FlowState(np.array([0.3, -0.2]), np.array([[0, 0.4], [0.9, 0]]))
    saddle = (np.array([0.1, 0.1]), np.array([[0, 0.2], [0.2, 0]]))
    expect = 0.5 * (0.2**2 + 0.3**2) + 0.5 * (0.2**2 + 0.7**2)
    assert continuous_lyapunov(s, saddle, p) == pytest.approx(expect)


@pytest.mark.parametrize("tf", [IdentityTransform(), OddPowerTransform(3), SinhTransform()])
def test_bregman_matches_quadrature(tf):
    rng = np.random.default_rng(0)
    for _ in range(10):
        a, ref = rng.uniform(-1.5, 1.5, 2)
        direct, _ = quad_integrate.quad(lambda t: float(tf.value(t) - tf.value(ref)), ref, a,
                                        epsabs=1e-14, epsrel=1e-13)
        assert float(tf.bregman(a, ref)) == pytest.approx(direct, abs=1e-8)
        assert float(tf.inverse(tf.value(a))) == pytest.approx(a, abs=1e-12)


def test_two_agent_lyapunov_two_ways():
    p = build_preset("two_agent_flow")
    xbar, lbar = p.saddle
    s = FlowState(np.array([0.4, -0.1]), np.array([[0, 0.7], [0.1, 0]]))
    direct = 0.0
    for a, b in zip(s.x, xbar):
        direct += quad_integrate.quad(lambda t: t - b, b, a, epsabs=1e-14)[0]
    for a, b in ((0.7, lbar[0, 1]), (0.1, lbar[1, 0])):
        direct += quad_integrate.quad(lambda t: t - b, b, a, epsabs=1e-14)[0]
    assert continuous_lyapunov(s, p.saddle, p.flow) == pytest.approx(direct, abs=1e-8)


def test_euler_lyapunov_nonincreasing_and_box():
    p = build_preset("two_agent_flow")
    dt = 1e-3
    traj = integrate(FlowState.zeros([0.0, 0.0]), p.flow, dt=dt, T=5.0)
    V = np.array([continuous_lyapunov(traj.state_at(k), p.saddle, p.flow) for k in range(traj.times.size)])
    assert np.all(V[1:] - V[:-1] <= 10 * dt**2)
    assert traj.lams.min() >= 0.0 and traj.lams.max() <= 1.0
    assert V[-1] < 1e-2 * V[0]


def test_euler_first_order_richardson():
    p = build_preset("two_agent_flow", {"c": 0.3})
    s0 = FlowState(np.array([0.2, -0.1]), np.zeros((2, 2)))
    ref = integrate(s0, p.flow, dt=1e-4, T=0.5, method=Integrator.RK4).final.x
    errs = [np.abs(integrate(s0, p.flow, dt=dt, T=0.5).final.x - ref).max() for dt in (1e-2, 5e-3)]
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    s1 = euler_step(s0, p.flow, 1e-2)
    s2 = euler_step(s0, p.flow, 5e-3)
    ratio = np.abs(s1.x - s0.x).max() / np.abs(s2.x - s0.x).max()
    assert ratio == pytest.approx(2.0, rel=0.1)


def test_rk4_higher_order():
    p = build_preset("two_agent_flow", {"c": 0.3})
    s0 = FlowState(np.array([0.2, -0.1]), np.zeros((2, 2)))
    ref = integrate(s0, p.flow, dt=1e-4, T=0.5, method=Integrator.RK4).final.x
    e1 = np.abs(integrate(s0, p.flow, dt=0.05, T=0.5, method=Integrator.RK4).final.x - ref).max()
    e2 = np.abs(integrate(s0, p.flow, dt=0.025, T=0.5, method=Integrator.RK4).final.x - ref).max()
    assert e1 / e2 > 8.0


def test_find_saddle_recovers_analytic():
    p = build_preset("two_agent_flow")
    found = find_saddle(FlowState.zeros([0.0, 0.0]), p.flow, dt=1e-2, horizon=200.0)
    assert found.converged
    np.testing.assert_allclose(found.x, p.saddle[0], atol=1e-6)
    lam_sum = found.lam[0, 1] + found.lam[1, 0]
    assert lam_sum == pytest.approx(p.saddle[1][0, 1] * 2, abs=1e-6)


def test_integrate_validation_and_divergence():
    p = build_preset("two_agent_flow")
    with pytest.raises(ValueError):
        integrate(FlowState.zeros([0.0, 0.0]), p.flow, dt=0.0)
    with pytest.raises(ValueError):
        FlowState(np.zeros(2), np.full((2, 2), 2.0))
    runaway = FlowProblem(G1, PrivateCosts(c2=-5.0))
    traj = integrate(FlowState(np.array([1.0, 3.0]), np.zeros((2, 2))), runaway, dt=0.1, T=100.0,
                     divergence_threshold=1e3)
    assert traj.status is FlowStatus.DIVERGED
    assert np.abs(traj.states).max() <= 1e3


def test_stride_keeps_last_state():
    p = build_preset("two_agent_flow")
    traj = integrate(FlowState.zeros([0.0, 0.0]), p.flow, dt=0.01, T=1.05, stride=10)
    assert traj.times[-1] == pytest.approx(1.05)
    assert traj.times.size == 12


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 3, elements=st.floats(-3, 3)), arrays(np.float64, (3, 3), elements=st.floats(0, 1)),
       st.sampled_from([Integrator.EULER, Integrator.RK4]), st.floats(1e-3, 0.5))
def test_edge_weights_stay_in_box(x, lam, method, dt):
    traj = integrate(FlowState(x, lam), FlowProblem(bounded_confidence(0.5)), dt=dt, T=10 * dt, method=method)
    assert traj.lams.min() >= 0.0 and traj.lams.max() <= 1.0
