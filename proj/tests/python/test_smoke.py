"""Smoke tests for the python extension module."""

import math

import numpy as np
import pytest

evbal = pytest.importorskip("evbal")


def test_metrics_match_known_values():
    assert evbal.mobility_fairness(np.array([2.0, 2.0]), np.array([2.0, 2.0])) == pytest.approx(0.0)
    assert evbal.mobility_fairness(np.array([2.0, 2.0]), np.array([1.0, 3.0])) == pytest.approx(-4.0 / 3.0)
    assert evbal.charging_unfairness(np.array([4.0]), np.array([2.0]), 1.0, 1e-3) == pytest.approx(2.0)
    assert evbal.mse(np.array([1.0, 2.0]), np.array([3.0, 2.0])) == pytest.approx(2.0)


def test_step_dynamics_single_region():
    state = evbal.FleetState.zero(1)
    state.vacant = np.array([3.0])
    kernel = evbal.KernelSlice()
    kernel.p_vacant = np.array([[1.0]])
    kernel.p_occupied = np.array([[0.0]])
    kernel.p_lowbatt = np.array([[0.0]])
    kernel.q_vacant = np.array([[1.0]])
    kernel.q_occupied = np.array([[0.0]])
    nxt = evbal.step_dynamics(state, np.zeros((1, 1)), np.zeros((1, 1)), np.array([2.0]), kernel)
    assert nxt.vacant[0] == pytest.approx(5.0)


def test_gamma_and_omega():
    eye = np.eye(2)
    assert evbal.compute_gamma(np.diag([2.0, 0.5]), eye) == pytest.approx(2.0)
    assert evbal.compute_omega(np.array([1.0, 1.0]), np.diag([1.0, 4.0])) == pytest.approx(1.25)
    assert evbal.empirical_quantile([1.0, 2.0, 3.0, 4.0], 0.5) == pytest.approx(2.0)


def test_forecast_roundtrip():
    obs = np.arange(40, dtype=float).reshape(20, 2)
    fitted = evbal.fit("persistence", obs)
    point = evbal.predict(fitted, obs, 2)
    assert point.shape == (4,)
    assert point[0] == pytest.approx(obs[-1, 0])


def test_worst_case_block_matches_closed_form():
    s = evbal.MomentUncertaintySet()
    s.center = np.array([5.0, 7.0])
    s.covariance = np.eye(2)
    s.omega = 4.0
    s.gamma = 4.0
    a = np.array([1.0, 0.0])
    closed = evbal.worst_case_linear_expectation(a, 0.0, s)
    assert closed == pytest.approx(7.0)
    status, objective, _ = evbal.worst_case_block_optimum(a, 0.0, s)
    assert status == "optimal"
    assert objective == pytest.approx(closed, rel=1e-4)


def test_estimation_and_balancing_pipeline():
    rng = np.random.default_rng(0)
    samples = rng.normal(size=(120, 2))
    cfg = evbal.BootstrapConfig()
    cfg.outer_count = 3
    cfg.inner_count = 10
    cfg.studentize_count = 4
    cfg.seed = 7
    report = evbal.run_estimation(samples, cfg)
    assert report.omega_hat >= 0.0
    assert report.gamma_hat > 0.0

    world = evbal.generate_world(regions=3, intervals=6, stations=1, fleet=60, days=8, episode_len=4, seed=3)
    hist = world.history_demand
    cfg2 = evbal.BootstrapConfig()
    cfg2.outer_count = 2
    cfg2.inner_count = 6
    cfg2.studentize_count = 3
    cfg2.seed = 9
    demand_rep = evbal.run_estimation_forecast(hist, "persistence", 6, 2, cfg2)
    supply_rep = evbal.run_estimation_forecast(world.history_supply, "persistence", 6, 2, cfg2)

    policy = evbal.make_policy(world, "counterpart", "persistence", demand_rep, supply_rep)
    log = evbal.run_receding_horizon(policy, world.scenario, 1)
    assert len(log.records) == world.scenario.episode_len
    totals = [r.m_balancing for r in log.records]
    assert all(t >= 0 for t in totals)
    assert log.fleet_total > 0


def test_simulation_is_deterministic():
    world = evbal.generate_world(regions=3, intervals=6, stations=1, fleet=50, days=6, episode_len=4, seed=11)
    policy = evbal.make_policy(world, "non-robust", "persistence")
    a = evbal.run_receding_horizon(policy, world.scenario, 1)
    b = evbal.run_receding_horizon(policy, world.scenario, 1)
    for ra, rb in zip(a.records, b.records):
        assert ra.m_balancing == rb.m_balancing
        assert np.array_equal(ra.realized_demand, rb.realized_demand)
