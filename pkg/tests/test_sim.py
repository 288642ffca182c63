import numpy as np
import pytest

from gcconsensus.errors import DwellViolation, NonFiniteState
from gcconsensus.graph import WeightedGraph, set_bounds
from gcconsensus.model import AgentModel
from gcconsensus.sim import (
    SwitchingSignal,
    accumulate_cost,
    constant_signal,
    convergence_report,
    csv_header,
    generate_signal,
    integrate,
    step_topologies,
    write_csv,
)
from gcconsensus.synthesis import CostWeights, guaranteed_cost, synthesize

K2 = set_bounds([WeightedGraph(2, ((1, 2, 1.0),))])


def test_schedule_constant(six_node_set):
    sig = generate_signal({"mode": "schedule", "dwell": 0.5, "schedule": [[0, 1]]}, six_node_set)
    assert sig.index_at(0.0) == 0 and sig.index_at(100.0) == 0


def test_schedule_two_phase(six_node_set):
    sig = generate_signal({"dwell": 0.5, "schedule": [[0, 1], [0.5, 2]]}, six_node_set)
    assert sig.index_at(0.49) == 0 and sig.index_at(0.5) == 1


def test_schedule_too_fast(six_node_set):
    with pytest.raises(DwellViolation):
        generate_signal({"dwell": 0.5, "schedule": [[0, 1], [0.2, 2]]}, six_node_set)


def test_schedule_bad_index(six_node_set):
    with pytest.raises(ValueError):
        generate_signal({"dwell": 0.5, "schedule": [[0, 5]]}, six_node_set)


def test_random_signal(six_node_set):
    spec = {"mode": "random", "dwell": 0.5, "seed": 42, "t_end": 30.0}
    a = generate_signal(spec, six_node_set)
    b = generate_signal(spec, six_node_set)
    c = generate_signal(dict(spec, seed=43), six_node_set)
    assert a == b and a != c
    gaps = np.diff([t for t, _ in a.switches])
    assert np.all(gaps >= 0.5) and np.all(gaps <= 1.0)
    assert {k for _, k in a.switches} <= {0, 1, 2, 3}
    assert a.switches[-1][0] < 30.0


def test_switch_snapping():
    sig = SwitchingSignal(0.09, ((0.0, 0), (0.10049, 1), (0.2004, 0)))
    idx = step_topologies(sig, 300, 1e-3)
    assert idx[99] == 0 and idx[100] == 1 and idx[199] == 1 and idx[200] == 0


def test_identical_initial_states_stay_identical(link_model, six_node_set, light_cost):
    res = synthesize(link_model, light_cost, six_node_set)
    x0 = np.tile([0.2, -0.1, 0.3, 0.05], (6, 1))
    sig = generate_signal({"mode": "random", "dwell": 0.5, "seed": 1, "t_end": 3}, six_node_set)
    tr = integrate(link_model, res.K, six_node_set, sig, x0, 3.0, P=res.P, cost=light_cost)
    assert np.max(tr.disagreement) == 0.0
    X = tr.agent_states()
    assert np.all(X == X[:, :1, :])
    assert np.max(np.abs(X - tr.reference[:, None, :])) <= 1e-12
    rep = convergence_report(tr, guaranteed_cost(res, x0, 6))
    assert rep.consensus_time == 0.0 and rep.J_T_final == 0.0 and rep.bound_satisfied
    assert np.all(tr.lyapunov == 0.0)


def test_scalar_pair_exponential_decay():
    m = AgentModel([[0.0]], [[1.0]])
    tr = integrate(m, [[1.0]], K2, constant_signal(), [[1.0], [0.0]], 1.0, 1e-3)
    X = tr.agent_states()
    ratio = (X[-1, 0, 0] - X[-1, 1, 0]) / (X[0, 0, 0] - X[0, 1, 0])
    assert abs(ratio - np.exp(-2.0)) <= 1e-6
    assert np.allclose(np.diff(tr.times), 1e-3) and len(tr.times) == 1001


class TestCost:
    def test_consensus_state_costs_nothing(self, six_node_set):
        X = np.tile([1.0, 2.0], (6, 1))
        c = accumulate_cost(X, six_node_set.graphs[0], np.ones((1, 2)), np.eye(2), np.eye(1))
        assert c.control == 0.0 and c.regulation == 0.0

    def test_hand_example(self):
        c = accumulate_cost(np.array([[1.0], [0.0]]), K2.graphs[0], np.eye(1), np.eye(1), np.eye(1))
        assert c.regulation == 2.0 and c.control == 2.0
        assert c.regulation_form == 2.0 and c.control_form == 2.0

    @pytest.mark.parametrize("seed", range(5))
    def test_forms_agree_on_random_states(self, seed, six_node_set):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(6, 3))
        K = rng.normal(size=(2, 3))
        G = rng.normal(size=(3, 3))
        H = rng.normal(size=(2, 2))
        for g in six_node_set.graphs:
            c = accumulate_cost(X, g, K, G @ G.T + np.eye(3), H @ H.T + np.eye(2))
            assert c.mismatch <= 1e-10

    def test_control_form_uses_riccati_gain(self, link_model, six_node_set, light_cost):
        # with K = B^T P the control form is x^T (L^2 kron P B R B^T P) x
        res = synthesize(link_model, light_cost, six_node_set)
        X = np.random.default_rng(0).normal(size=(6, 4))
        P, B, R = res.P, link_model.B, light_cost.R
        L = six_node_set.laplacians()[1]
        x = X.reshape(-1)
        form = x @ np.kron(L @ L, P @ B @ R @ B.T @ P) @ x
        c = accumulate_cost(X, six_node_set.graphs[1], res.K, light_cost.Q, R)
        assert abs(c.control - form) <= 1e-8 * form
        assert abs(c.regulation - x @ np.kron(2 * L, light_cost.Q) @ x) <= 1e-8 * c.regulation


def test_scalar_fixture_bound(scalar_model):
    cost = CostWeights([[1.0]], [[0.1]])
    res = synthesize(scalar_model, cost, K2)
    x0 = np.array([[1.0], [-1.0]])
    tr = integrate(scalar_model, res.K, K2, constant_signal(), x0, 5.0, P=res.P, cost=cost)
    rep = convergence_report(tr, guaranteed_cost(res, x0, 2))
    assert rep.bound_satisfied and rep.V_monotone and rep.consensus_time is not None
    assert np.all(np.diff(tr.cost_running) >= 0)
    assert tr.cost_check <= 1e-8


def test_sign_flipped_gain_does_not_converge(scalar_model):
    res = synthesize(scalar_model, ([[1.0]], [[0.1]]), K2)
    x0 = np.array([[1.0], [-1.0]])
    try:
        tr = integrate(scalar_model, -res.K, K2, constant_signal(), x0, 5.0)
    except NonFiniteState:
        return
    assert convergence_report(tr, 1.0).consensus_time is None


def test_blowup_keeps_partial_trajectory():
    m = AgentModel([[0.0]], [[1.0]])
    with pytest.raises(NonFiniteState) as info:
        integrate(m, [[-10.0]], K2, constant_signal(), [[1.0], [0.0]], 5.0, 1e-3)
    partial = info.value.trajectory
    assert not partial.complete
    assert 0 < len(partial.times) < 5001
    assert np.all(np.isfinite(partial.states))


def test_mean_dynamics(link_model, six_node_set, light_cost):
    """The agent average obeys mean' = A mean + (1/N) sum f(x_i) under any switching."""
    res = synthesize(link_model, light_cost, six_node_set)
    x0 = np.random.default_rng(5).uniform(-0.5, 0.5, (6, 4))
    sig = generate_signal({"mode": "random", "dwell": 0.5, "seed": 3, "t_end": 5}, six_node_set)
    h = 1e-3
    tr = integrate(link_model, res.K, six_node_set, sig, x0, 5.0, h)
    X = tr.agent_states()
    mean = X.mean(axis=1)
    rate = mean @ link_model.A.T + np.array([link_model.f_batch(Xk).mean(axis=0) for Xk in X])
    # composite Simpson over pairs of steps
    pred = mean[0] + np.concatenate([[np.zeros(4)], np.cumsum(
        h / 3 * (rate[0:-2:2] + 4 * rate[1:-1:2] + rate[2::2]), axis=0)])
    assert np.max(np.abs(pred - mean[::2])) <= 1e-6


def test_rk4_step_halving(link_model, six_node_set, light_cost):
    res = synthesize(link_model, light_cost, six_node_set)
    x0 = np.random.default_rng(2).uniform(-0.5, 0.5, (6, 4))
    sig = SwitchingSignal(0.5, ((0.0, 0), (1.0, 2), (2.0, 3), (3.0, 1)))
    a = integrate(link_model, res.K, six_node_set, sig, x0, 4.0, 1e-3).states[-1]
    b = integrate(link_model, res.K, six_node_set, sig, x0, 4.0, 5e-4).states[-1]
    assert np.linalg.norm(a - b) <= 1e-7 * np.linalg.norm(b)


def test_reference_ignores_switching(link_model, six_node_set, light_cost):
    res = synthesize(link_model, light_cost, six_node_set)
    x0 = np.random.default_rng(4).uniform(-0.5, 0.5, (6, 4))
    s1 = generate_signal({"mode": "random", "dwell": 0.5, "seed": 1, "t_end": 2}, six_node_set)
    s2 = SwitchingSignal(0.5, ((0.0, 3), (0.7, 0)))
    r1 = integrate(link_model, res.K, six_node_set, s1, x0, 2.0).reference
    r2 = integrate(link_model, res.K, six_node_set, s2, x0, 2.0).reference
    assert np.array_equal(r1, r2)


def test_csv_output(tmp_path):
    m = AgentModel([[0.0]], [[1.0]])
    tr = integrate(m, [[1.0]], K2, constant_signal(), [[1.0], [0.0]], 0.01, 1e-3)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(tr, p1)
    write_csv(tr, p2)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    assert lines[0] == "t,x_1_1,x_2_1,c_1,disagreement,J_T,V"
    assert len(lines) == 12
    row = [float(v) for v in lines[5].split(",")]
    assert row[1] == tr.states[4, 0]  # 17 significant digits round-trip exactly
    assert csv_header(2, 2).startswith("t,x_1_1,x_1_2,x_2_1,x_2_2,c_1,c_2")
