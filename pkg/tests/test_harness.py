import numpy as np
import pytest

from statenet.core import ConfigError, NeighborhoodRule, PrivateCosts, bounded_confidence, dual_from_state
from statenet.discrete import DynamicsSpec, Family, ScheduleKind, StepSchedule, run
from statenet.harness import (
    analyze_equilibrium,
    audit_smoothness,
    bcd_dual_oracle,
    cluster_labels,
    distance_monotonicity,
    eps_equilibrium_check,
    eps_iteration_bound,
    fd_gradient_check,
    monitor,
    witness_distance,
)
from statenet.lagrangian import LyapunovFamily
from statenet.models import PRESET_NAMES, build_preset

X3 = np.array([0.0, 0.5, 2.0])
HK = bounded_confidence(1.0)


def test_monitor_lazy_hk_zero_violations():
    p = build_preset("lazy_hk", {"eps": 3.0})
    x0 = np.random.default_rng(0).uniform(0, 20, 20)
    traj = run(p.dynamics, x0, p.g, p.f)
    ledger = monitor(traj, p.g, p.f)
    assert ledger.violations == 0
    assert ledger.certified.all()
    np.testing.assert_allclose(ledger.values, traj.lyapunov, rtol=0, atol=1e-12)
    assert len(list(ledger.rows())) == traj.iterations


def test_constant_trajectory_ledger():
    traj = run(DynamicsSpec(Family.BCD_MAJORIZE, m=1.0, max_iter=3, tol=1e-300), np.full(4, 2.0), HK)
    ledger = monitor(traj, HK)
    assert not ledger.drift.any() and not ledger.bound.any()
    assert ledger.satisfied.all()


def test_monitor_other_family_and_unknown():
    p = build_preset("homogeneous_hk", {"eps": 1.0})
    traj = run(p.dynamics, X3, p.g)
    ledger = monitor(traj, p.g, family=LyapunovFamily.EXACT, coefficient=1.0)
    assert ledger.violations == 0
    with pytest.raises(ConfigError):
        monitor(traj, p.g, family="nope")


def test_subgradient_ledger_is_observational():
    p = build_preset("anchored_complement_hk")
    traj = run(p.dynamics.with_(max_iter=50), np.array([0.0, 1.0, 4.0]), p.g, p.f)
    ledger = monitor(traj, p.g, p.f)
    assert ledger.observational
    assert ledger.certified_violations == 0


def test_fd_zero_problem_is_exact():
    x = np.array([0.3, 5.0, 9.0])
    assert fd_gradient_check(HK, None, x, np.zeros((3, 3))) == 0.0


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_fd_gradients_per_preset(name):
    n = {"anchored_complement_hk": 3, "two_agent_flow": 2}.get(name, 6)
    p = build_preset(name, n=n, seed=0)
    rng = np.random.default_rng(1)
    lo, hi = p.box
    if p.dynamics is not None and p.dynamics.log_states:
        lo, hi = np.log(lo), np.log(hi)
    for _ in range(10):
        x = rng.uniform(lo, hi, n)
        lam = rng.uniform(0, 1, (n, n))
        assert fd_gradient_check(p.g, p.f, x, lam) < 1e-6
        assert fd_gradient_check(p.g, p.f, x, target="penalty", rng=rng) < 1e-6
        if name == "two_agent_flow":
            assert fd_gradient_check(p.g, p.f, x, lam, target="flow") < 1e-6


def test_fd_quadratic_presets_are_near_exact():
    p = build_preset("lazy_hk", {"cost_weight": 0.5, "cost_center": 3.0, "m": 1.0})
    x = np.random.default_rng(2).uniform(0, 10, 8)
    assert fd_gradient_check(p.g, p.f, x, np.random.default_rng(3).uniform(0, 1, (8, 8))) < 1e-9


def test_fd_rejects_unknown_target():
    with pytest.raises(ValueError):
        fd_gradient_check(HK, None, X3, target="hessian")


def test_dual_oracle_examples():
    res = bcd_dual_oracle(X3, HK)
    assert res.agrees
    np.testing.assert_array_equal(res.weights, dual_from_state(X3, HK).weights)
    res = bcd_dual_oracle(np.array([0.0, 10.0, 20.0]), HK)
    assert not res.weights.any()
    res = bcd_dual_oracle(X3, HK, rule=NeighborhoodRule.REPEL)
    assert res.agrees
    with pytest.raises(ConfigError):
        bcd_dual_oracle(np.zeros(5), HK)


def test_dual_oracle_random_agreement():
    rng = np.random.default_rng(7)
    assert all(bcd_dual_oracle(rng.uniform(0, 3, 3), HK).agrees for _ in range(100))


def test_cluster_analysis():
    assert cluster_labels(np.array([0.0, 0.1, 5.0, 5.05]), 1.0).tolist() == [0, 0, 1, 1]
    p = build_preset("homogeneous_hk", {"eps": 10.0})
    traj = run(p.dynamics, np.random.default_rng(0).uniform(0, 100, 50), p.g)
    rep = analyze_equilibrium(traj, eps=10.0)
    assert rep.separated_by_eps
    assert sum(rep.sizes) == 50
    consensus = build_preset("weighted_consensus", n=6)
    traj = run(consensus.dynamics.with_(max_iter=5000), np.random.default_rng(1).uniform(0, 100, 6), consensus.g)
    assert analyze_equilibrium(traj, gap=1e-3).n_clusters == 1


def test_polarization_sign_groups():
    p = build_preset("polarization")
    traj = run(p.dynamics, np.random.default_rng(1).uniform(-1, 1, 100), p.g, p.f)
    groups = analyze_equilibrium(traj).sign_groups
    assert groups["positive"]["size"] + groups["negative"]["size"] == 100
    assert groups["positive"]["mean_step"] > 0 > groups["negative"]["mean_step"]


def test_diverged_run_claims_no_clusters():
    p = build_preset("polarization")
    traj = run(p.dynamics.with_(divergence_threshold=2.0, max_iter=100),
               np.random.default_rng(1).uniform(-1, 1, 100), p.g, p.f)
    rep = analyze_equilibrium(traj)
    assert rep.diverged and rep.n_clusters == 0


def test_eps_bound_scaling_and_trivial_hit():
    assert eps_iteration_bound(2.0, 3, 1.5, 0.2) == pytest.approx(4 * eps_iteration_bound(2.0, 3, 1.5, 0.4))
    g = bounded_confidence(1.0)
    spec = DynamicsSpec(Family.SUBGRADIENT, schedule=StepSchedule(ScheduleKind.CONSTANT_EPS, eps=0.1, grad_bound=1.0),
                        max_iter=3)
    traj = run(spec, np.array([0.0, 0.5]), g)
    rep = eps_equilibrium_check(traj, g, 0.1, 1.0, witness_distance([0.0, 0.5], [0.25, 0.25]))
    assert rep.hit_iteration == 0 and rep.passed


def test_distance_report_counts_only_certified_steps():
    p = build_preset("anchored_complement_hk")
    traj = run(p.dynamics.with_(max_iter=300), np.array([0.0, 1.0, 4.0]), p.g, p.f)
    rep = distance_monotonicity(traj, [1.2, 1.4, 2.4], 2.3, p.g, p.f)
    assert rep.distances.shape[0] == traj.iterations + 1
    assert rep.certified_increases == 0


def test_smoothness_audit_flags_small_m():
    p = build_preset("lazy_hk", {"cost_weight": 3.0, "m": 1.0})
    audit = audit_smoothness(p.g, p.f, 1.0, p.box)
    assert not audit.passed
    assert audit.max_f2 == pytest.approx(6.0)
    assert audit_smoothness(HK, PrivateCosts(c2=0.25), 1.0, (0, 10)).passed
    with pytest.raises(ConfigError):
        audit_smoothness(HK, None, None, (0, 1))
