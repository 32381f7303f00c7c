import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossbar_sim.circuit import G_OPEN, WIRE, CircuitGraph
from crossbar_sim.config import NeuronModel, default_config
from crossbar_sim.exceptions import FloatingNode, NonConvergence
from crossbar_sim.pipeline import build_graph
from crossbar_sim.solver import CircuitSolver, neuron_transfer, solve_dc, solve_transient, stamp

from conftest import random_weights


def _divider(r1=1e3, r2=3e3, v=1.0):
    g = CircuitGraph()
    a, b = g.add_nodes(["a", "b"])
    g.inputs = [g.add_source("V1", a, 0, v, "input")]
    g.add_resistors([a, b], [b, 0], [r1, r2], WIRE)
    g.outputs = [int(b)]
    return g.freeze()


def test_divider_and_ohm():
    res = solve_dc(_divider())
    assert res.voltage(_divider(), "b") == pytest.approx(0.75, rel=1e-9)
    # gmin shunts add ~1.6e-12 A on top of the 2.5e-4 A divider current
    assert res.source_currents[0] == pytest.approx(1.0 / 4e3, rel=1e-7)
    assert res.total_power == pytest.approx(1.0 / 4e3, rel=1e-7)
    assert res.energy_balance_error < 1e-12
    assert res.converged and res.newton_iterations <= 2


def test_input_override():
    solver = CircuitSolver(_divider())
    assert solver.solve_dc([2.0]).outputs[0] == pytest.approx(1.5, rel=1e-9)
    assert solver.solve_dc(source_values={"V1": -1.0}).outputs[0] == pytest.approx(-0.75)
    with pytest.raises(ValueError):
        solver.solve_dc([1.0, 2.0])


def test_stamp_two_nodes():
    mna = stamp(_divider(), gmin=G_OPEN)
    A = mna.A.toarray()
    # unknowns: v_a, v_b, i_V1
    ref = np.array([[1e-3 + G_OPEN, -1e-3, 1.0],
                    [-1e-3, 1e-3 + 1 / 3e3 + G_OPEN, 0.0],
                    [1.0, 0.0, 0.0]])
    assert np.allclose(A, ref, rtol=0, atol=1e-18)
    assert mna.b0.tolist() == [0.0, 0.0, 1.0]


def test_floating_node_is_named():
    g = CircuitGraph()
    a, b, c = g.add_nodes(["a", "b", "c"])
    g.add_source("V1", a, 0, 1.0, "input")
    g.add_resistors([a], [0], [1e3], WIRE)
    g.add_resistors([b], [c], [1e3], WIRE)
    g.freeze()
    with pytest.raises(FloatingNode) as exc:
        CircuitSolver(g)
    assert exc.value.node == "b"


models = st.builds(NeuronModel, kind=st.sampled_from(["sigmoid", "tanh", "relu"]),
                   gain=st.floats(0.5, 20), v_high=st.floats(0.2, 1.5),
                   v_low=st.floats(-1.5, -0.2))


@given(model=models, v=st.floats(-2, 2))
def test_transfer_derivative(model, v):
    out, slope = neuron_transfer(v, model)
    assert model.v_low - 1e-12 <= out <= model.v_high + 1e-12
    h = 1e-6
    if model.kind.value == "relu":
        kinks = (model.v_mid, model.v_mid + (model.v_high - model.v_mid) / model.gain)
        if min(abs(v - k) for k in kinks) < 10 * h:
            return
    fd = (neuron_transfer(v + h, model)[0] - neuron_transfer(v - h, model)[0]) / (2 * h)
    assert slope == pytest.approx(fd, rel=1e-5, abs=1e-7)


@given(model=models)
def test_transfer_midpoint_slope(model):
    if model.kind.value == "relu":
        return
    out, slope = neuron_transfer(model.v_mid, model)
    assert out == pytest.approx(model.v_mid, abs=1e-12)
    assert slope == pytest.approx(model.gain, rel=1e-12)


def test_tanh_traces_sigmoid():
    v = np.linspace(-1, 1, 41)
    a, _ = neuron_transfer(v, NeuronModel("sigmoid"))
    b, _ = neuron_transfer(v, NeuronModel("tanh"))
    assert np.allclose(a, b, atol=1e-14)


@pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu"])
def test_network_conservation(kind):
    sizes = [8, 5, 3]
    rng = np.random.default_rng(3)
    cfg = default_config(sizes, neuron__kind=kind, interconnect__cap_model="pi")
    g = build_graph(cfg, random_weights(sizes, rng, binary=False))
    solver = CircuitSolver(g)
    for v in rng.uniform(cfg.vss, cfg.vdd, size=(5, 8)):
        res = solver.solve_dc(v, raise_on_failure=True)
        assert res.max_kcl_residual < 1e-10
        assert res.energy_balance_error < 1e-9
        assert np.all(res.outputs <= cfg.vdd + 1e-9) and np.all(res.outputs >= cfg.vss - 1e-9)


def test_woodbury_matches_direct():
    sizes = [10, 6, 4]
    rng = np.random.default_rng(8)
    cfg = default_config(sizes)
    g = build_graph(cfg, random_weights(sizes, rng))
    v = rng.uniform(cfg.vss, cfg.vdd, 10)
    a = CircuitSolver(g, method="woodbury").solve_dc(v)
    b = CircuitSolver(g, method="direct").solve_dc(v)
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-9)


def test_warm_start_reaches_same_point():
    sizes = [10, 6, 4]
    rng = np.random.default_rng(9)
    cfg = default_config(sizes)
    solver = CircuitSolver(build_graph(cfg, random_weights(sizes, rng)))
    v1, v2 = rng.uniform(cfg.vss, cfg.vdd, size=(2, 10))
    cold = solver.solve_dc(v2)
    warm = solver.solve_dc(v2, x0=solver.solve_dc(v1).x)
    assert np.allclose(cold.outputs, warm.outputs, atol=1e-9)
    assert warm.newton_iterations <= cold.newton_iterations + 1


def test_nonconvergence_reported():
    sizes = [6, 4]
    cfg = default_config(sizes, neuron__gain=50.0)
    g = build_graph(cfg, random_weights(sizes, np.random.default_rng(1)))
    solver = CircuitSolver(g, max_iter=1)
    res = solver.solve_dc(np.full(6, 0.3))
    assert not res.converged
    with pytest.raises(NonConvergence) as exc:
        solver.solve_dc(np.full(6, 0.3), raise_on_failure=True)
    assert exc.value.result is not None


# -- transient -------------------------------------------------------------

def _rc(R=1e3, C=1e-12):
    g = CircuitGraph()
    a, b = g.add_nodes(["in", "out"])
    g.inputs = [g.add_source("Vin", a, 0, 0.0, "input")]
    g.add_resistors([a], [b], [R], WIRE)
    g.add_capacitors([b], 0, C)
    g.outputs = [int(b)]
    return g.freeze()


@pytest.mark.parametrize("steps", [100, 400])
def test_rc_step_matches_backward_euler(steps):
    tau = 1e-9
    dt = tau / steps
    tr = solve_transient(_rc(), {"Vin": ([0, 1e-9 * dt], [0, 1])}, 3 * tau, dt, record=True)
    n = np.arange(tr.times.size)
    # the discrete solution is exactly 1 - (1 + dt/tau)^-n
    assert np.allclose(tr.waveforms[:, 0], 1 - (1 + dt / tau) ** -n.astype(float), atol=1e-9)
    assert abs(tr.waveforms[steps, 0] - (1 - np.exp(-1))) < 0.01


def test_memoryless_network_tracks_dc():
    tr = solve_transient(_divider(), {"V1": ([0, 1e-12, 2e-9], [0, 1, 1])}, 2e-9, 1e-11,
                         t_sampling=1e-9)
    assert np.allclose(tr.outputs[:, 0], 0.75, atol=1e-12)
    assert np.allclose(tr.dc_targets[:, 0], 0.75)
    assert tr.latency == pytest.approx(0.0)


def test_interval_energy_of_resistor():
    tr = solve_transient(_divider(), {"V1": ([0, 1e-13], [1, 1])}, 1e-9, 1e-11)
    assert tr.interval_energy[0] == pytest.approx(1e-9 / 4e3, rel=1e-7)
    assert tr.interval_power[0] == pytest.approx(1 / 4e3, rel=1e-7)


def test_unsettled_interval_is_inf():
    tr = solve_transient(_rc(C=1e-9), {"Vin": ([0, 1e-13], [0, 1])}, 1e-9, 1e-11,
                         settle_band=0.01)
    assert np.isinf(tr.settling_time[0, 0]) and np.isinf(tr.latency)


def test_transient_matches_dc_steady_state():
    sizes = [5, 3, 2]
    rng = np.random.default_rng(12)
    cfg = default_config(sizes, neuron__c_out=1e-15)
    g = build_graph(cfg, random_weights(sizes, rng))
    v = rng.uniform(cfg.vss, cfg.vdd, 5)
    waves = {src: ([0, 1e-11], [0, v[k]]) for k, src in enumerate(g.inputs)}
    solver = CircuitSolver(g)
    tr = solver.solve_transient(waves, 2e-9, 1e-11)
    assert np.allclose(tr.outputs[0], solver.solve_dc(v).outputs, atol=1e-9)


def test_bad_sampling_grid():
    with pytest.raises(ValueError):
        solve_transient(_rc(), {}, 1e-9, 3e-11, t_sampling=1e-10)
