from __future__ import annotations

import math

import numpy as np
import pytest

import kcmfold.folding as folding
from kcmfold.exceptions import SingularityError, ValidationError
from kcmfold.folding import (C0, Converged, SimulationConfig, audit_discretization, detect_stall,
                             discretization_order, initial_conformation, kcm_control_input,
                             kcm_step, ods_control, ods_linear_term, protocol_bounds,
                             protocol_weight, reference_vector_field, simulate)
from kcmfold.kinetostatics import TorqueField


def test_conversion_constant():
    assert C0 == pytest.approx(6.022e23 * (1.602e-19) ** 2 / 4184 * 1e20)
    assert C0 == pytest.approx(369.38, abs=0.01)


def test_protocol_weight_and_bounds():
    np.testing.assert_array_equal(protocol_weight(22), math.sqrt(22) * np.eye(22))
    c = protocol_bounds(22, 20.0)
    assert c.shape == (22,)
    assert c[0] == pytest.approx(C0 * 20 / math.sqrt(22))
    with pytest.raises(ValidationError):
        protocol_bounds(22, 0.0)


def test_kcm_step_moves_exactly_h_in_max_norm():
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta, tau = rng.normal(size=6), rng.normal(scale=50, size=6)
        step = kcm_step(theta, tau, 0.04) - theta
        assert np.max(np.abs(step)) == pytest.approx(0.04, rel=1e-12)
        assert np.all(np.sign(step) == np.sign(tau))
    with pytest.raises(Converged):
        kcm_step(np.zeros(3), np.zeros(3), 0.04)


def test_control_input_realises_reference_field():
    tau = np.array([3.0, -12.0, 0.5])
    u = kcm_control_input(tau)
    np.testing.assert_allclose(tau + u, reference_vector_field(tau), atol=1e-15)
    np.testing.assert_allclose(reference_vector_field(tau), tau / 12.0)
    with pytest.raises(Converged):
        kcm_control_input(np.zeros(2))


def test_ods_unconstrained_minimizer_is_kcm_control():
    tau = np.array([40.0, -25.0, 3.0, 0.1])
    Q = protocol_weight(4)
    np.testing.assert_allclose(-np.linalg.solve(Q, ods_linear_term(tau, Q)), kcm_control_input(tau),
                               atol=1e-12)
    sol = ods_control(tau, Q, np.full(4, 1e6))
    np.testing.assert_allclose(sol.u, kcm_control_input(tau), atol=1e-12)
    assert not sol.active.any()


def test_ods_control_respects_tight_bounds():
    tau = np.array([40.0, -25.0, 3.0, 0.1])
    c = np.full(4, 5.0)
    sol = ods_control(tau, protocol_weight(4), c)
    assert np.all(np.abs(sol.u) <= c + 1e-9)
    # identity-weighted: each coordinate is the clamp of the KCM control
    np.testing.assert_allclose(sol.u, np.clip(kcm_control_input(tau), -c, c), atol=1e-12)


def test_initial_conformation_rules():
    np.testing.assert_array_equal(initial_conformation("zero", 5), np.zeros(5))
    a = initial_conformation("uniform", 22, seed=7)
    np.testing.assert_array_equal(a, initial_conformation("uniform", 22, seed=7))
    assert not np.array_equal(a, initial_conformation("uniform", 22, seed=8))
    deg = np.degrees(initial_conformation("uniform", 22, seed=0))
    assert abs(deg.mean() - 27.7) < 3 * 1.1 / math.sqrt(22)
    assert np.all(np.abs(deg - 27.7) <= math.sqrt(3) * 1.1 + 1e-12)
    np.testing.assert_array_equal(initial_conformation("fixed", 2, values=[0.1, 0.2]), [0.1, 0.2])
    with pytest.raises(ValidationError):
        initial_conformation("fixed", 3, values=[0.1])
    with pytest.raises(ValidationError, match="unknown"):
        initial_conformation("helix", 3)


def test_initial_rule_spread_matches_requested_std():
    deg = np.degrees(initial_conformation("uniform", 20000, seed=1))
    assert deg.std() == pytest.approx(1.1, rel=0.02)


def test_config_validation():
    with pytest.raises(ValidationError, match="rho"):
        SimulationConfig(mode="ods-qp", rho=-1.0)
    with pytest.raises(ValidationError, match="mode"):
        SimulationConfig(mode="fast")
    with pytest.raises(ValidationError, match="h must"):
        SimulationConfig(h=0.0)
    cfg = SimulationConfig(mode="ods-qp", bound=3.0)
    np.testing.assert_array_equal(cfg.bounds(4), np.full(4, 3.0))
    assert SimulationConfig().bounds(4) is None


def test_stall_detector_on_synthetic_sequences():
    flat = [10.0] * 60
    binding = [1.0] * 60
    assert detect_stall(flat, binding, window=50, rtol=1e-6)
    assert not detect_stall(flat[:50], binding[:50], window=50, rtol=1e-6)
    decreasing = list(np.linspace(10, 1, 60))
    assert not detect_stall(decreasing, binding, window=50, rtol=1e-6)
    assert not detect_stall(flat, [1.0] * 59 + [0.4], window=50, rtol=1e-6)
    # a tiny improvement under rtol still counts as stalled
    nudged = [10.0] * 10 + [10.0 * (1 - 1e-8)] * 50
    assert detect_stall(nudged, binding, window=50, rtol=1e-6)


def test_conventional_run_on_fixture(fixture_chain):
    topology, params = fixture_chain
    res = simulate(topology, params, SimulationConfig(max_iter=40))
    assert res.status == "max-iterations"
    assert [r.k for r in res.records] == list(range(41))
    assert res.steps == 40
    for a, b in zip(res.records, res.records[1:]):
        assert np.max(np.abs(b.theta - a.theta)) == pytest.approx(0.04, rel=1e-12)
        np.testing.assert_allclose(a.tau + a.control, a.tau / a.tau_inf, atol=1e-12)
    assert res.max_bound_utilization is None
    assert res.final.energy.total < res.records[0].energy.total


def test_ods_step_cap_and_bounds(fixture_chain):
    topology, params = fixture_chain
    cfg = SimulationConfig(mode="ods-qp", bound=2.0, max_iter=40)
    res = simulate(topology, params, cfg)
    for a, b in zip(res.records, res.records[1:]):
        assert np.all(np.abs(a.control) <= 2.0 + 1e-9)
        v = a.tau + a.control
        assert np.max(np.abs(b.theta - a.theta)) == pytest.approx(0.04 * min(1.0, np.max(np.abs(v))),
                                                                  rel=1e-12)
    assert res.max_bound_utilization <= 1.0 + 1e-12
    assert any(r.n_active for r in res.records)


def test_large_bounds_reproduce_conventional_run(fixture_chain):
    topology, params = fixture_chain
    conv = simulate(topology, params, SimulationConfig(max_iter=50))
    ods = simulate(topology, params, SimulationConfig(mode="ods-qp", bound=1e6, max_iter=50))
    for a, b in zip(conv.records, ods.records):
        np.testing.assert_allclose(a.theta, b.theta, atol=1e-6, rtol=0)


def test_simulation_is_deterministic(fixture_chain):
    topology, params = fixture_chain
    cfg = SimulationConfig(mode="ods-qp", rho=0.05, max_iter=30, seed=3)
    a, b = simulate(topology, params, cfg), simulate(topology, params, cfg)
    for x, y in zip(a.records, b.records):
        np.testing.assert_array_equal(x.theta, y.theta)
        np.testing.assert_array_equal(x.control, y.control)


def test_threshold_stops_the_run(fixture_chain):
    topology, params = fixture_chain
    res = simulate(topology, params, SimulationConfig(threshold=1e9))
    assert res.status == "converged" and res.steps == 0 and len(res.records) == 1
    np.testing.assert_array_equal(res.final.control, 0.0)


def test_record_cadence_keeps_last_step(fixture_chain):
    topology, params = fixture_chain
    res = simulate(topology, params, SimulationConfig(max_iter=23, record_every=5))
    assert [r.k for r in res.records] == [0, 5, 10, 15, 20, 23]
    assert len(res.tau_inf_history) == 24


def test_tight_bounds_stall(fixture_chain):
    topology, params = fixture_chain
    res = simulate(topology, params, SimulationConfig(mode="ods-qp", bound=1e-9, max_iter=500,
                                                      h=1e-12, stall_window=20))
    assert res.status == "stalled"
    assert res.stall_step is not None and res.final.k == res.stall_step


def test_collapse_is_reported_not_raised(fixture_chain, monkeypatch):
    topology, params = fixture_chain

    class Exploding(TorqueField):
        def evaluate(self, theta):
            raise SingularityError("atoms 0 and 5 collapsed", pair=(0, 5), distance=0.0)

    monkeypatch.setattr(folding, "TorqueField", Exploding)
    res = simulate(topology, params, SimulationConfig())
    assert res.status == "singular" and "collapsed" in res.error


def test_audit_on_fixture(fixture_chain):
    field_ = TorqueField(*fixture_chain)
    theta0 = initial_conformation("uniform", 8, seed=0)
    audit = audit_discretization(field_, theta0, 0.04, t_star=2.0, refinements=4)
    assert audit.n_steps == 50
    assert audit.deviations[0] == 0.0
    assert audit.conclusive
    assert audit.max_deviation <= audit.bound
    a, b, ratio = discretization_order(field_, theta0, 0.04, refinements=4)
    assert 1.5 <= ratio <= 2.5


def test_audit_reports_inconclusive_runs():
    def zero_field(theta):
        return np.zeros_like(theta)
    audit = audit_discretization(zero_field, np.zeros(3), 0.1)
    assert not audit.conclusive and not audit.within_bound
    assert "inconclusive" in audit.note
