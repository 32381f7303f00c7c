import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossbar_sim.circuit import (
    SYNAPSE,
    WIRE,
    WeightMatrices,
    apply_variation,
    build_network,
    expected_counts,
    map_weight_to_conductances,
    map_weights,
    variation_factors,
)
from crossbar_sim.config import builtin_preset, default_config
from crossbar_sim.exceptions import DimensionMismatch, ValidationError
from crossbar_sim.partition import plan_partitions

from conftest import random_weights

MRAM = builtin_preset("mram")


def test_binary_mapping():
    g = map_weight_to_conductances(0.3, MRAM)
    assert g.g_pos == pytest.approx(1 / 8.5e3) and g.g_neg == pytest.approx(1 / 25.5e3)
    g = map_weight_to_conductances(-2.0, MRAM)
    assert g.g_pos == pytest.approx(1 / 25.5e3) and g.g_neg == pytest.approx(1 / 8.5e3)


@given(w=st.floats(-3, 3), w_max=st.floats(0.1, 3))
def test_linear_mapping_is_differential(w, w_max):
    gp, gn = map_weights(w, MRAM, "linear", w_max)
    span = MRAM.g_max - MRAM.g_min
    assert MRAM.g_min - 1e-18 <= min(gp, gn) and max(gp, gn) <= MRAM.g_max + 1e-18
    assert (gp - gn) / span == pytest.approx(np.clip(w / w_max, -1, 1), abs=1e-12)


def test_linear_mapping_needs_scale():
    with pytest.raises(ValidationError):
        map_weights(0.5, MRAM, "linear", 0.0)


def test_weight_shape_checks():
    with pytest.raises(DimensionMismatch):
        WeightMatrices([np.ones((2, 3)), np.ones((2, 3))], None)
    with pytest.raises(DimensionMismatch):
        WeightMatrices([np.ones((2, 3))], [np.ones(3)])
    with pytest.raises(ValidationError):
        WeightMatrices([np.array([[np.nan]])], None)
    w = WeightMatrices([np.ones((2, 3))], None)
    assert w.layer_sizes == (3, 2)
    with pytest.raises(DimensionMismatch):
        w.check_topology(default_config([4, 2]).topology)


@given(sizes=st.lists(st.integers(1, 12), min_size=2, max_size=4),
       parasitics=st.booleans(), cap=st.sampled_from(["L", "pi"]),
       c_out=st.sampled_from([0.0, 1e-15]), data=st.data())
def test_element_counts_match_closed_form(sizes, parasitics, cap, c_out, data):
    n = len(sizes) - 1
    h = [data.draw(st.integers(1, sizes[j] + 1)) for j in range(n)]
    v = [data.draw(st.integers(1, sizes[j + 1])) for j in range(n)]
    cfg = default_config(sizes, sim__parasitics=parasitics, interconnect__cap_model=cap,
                         neuron__c_out=c_out)
    weights = random_weights(sizes, np.random.default_rng(0))
    g = build_network(weights, plan_partitions(sizes, h, v), cfg)
    counts = g.counts()
    ref = expected_counts(sizes, parasitics, cap, neuron_caps=c_out > 0)
    for key, value in ref.items():
        assert counts[key] == value, key
    assert counts["resistors"] == ref["synapses"] + ref["wire_segments"]


def test_partitioning_restarts_row_lines():
    sizes = [7, 4]
    cfg = default_config(sizes)
    weights = random_weights(sizes, np.random.default_rng(1))
    flat = build_network(weights, plan_partitions(sizes, [1], [1]), cfg)
    split = build_network(weights, plan_partitions(sizes, [1], [2]), cfg)
    # with two column partitions the second half of every row hangs off the driver again
    names = split.node_names
    wires = [(names[a], names[b]) for a, b, k in zip(split.res_n1, split.res_n2, split.res_kind)
             if k == WIRE]
    assert ("in0", "l1_r1_c2") in wires
    assert ("in0", "l1_r1_c2") not in [(flat.node_names[a], flat.node_names[b])
                                       for a, b in zip(flat.res_n1, flat.res_n2)]


def test_access_resistance_in_series():
    cfg = default_config([2, 1], sim__parasitics=False)
    weights = WeightMatrices([np.array([[1.0, -1.0]])], [np.array([1.0])])
    g = build_network(weights, None, cfg)
    syn = g.synapse_mask
    assert np.allclose(g.res_ohms[syn], g.res_device[syn] + cfg.bitcell.access_resistance)
    assert set(np.round(g.res_device[syn])) == {8.5e3, 25.5e3}


def test_virtual_ground_single_layer_only():
    cfg = default_config([3, 2, 2])
    weights = random_weights([3, 2, 2], np.random.default_rng(2))
    with pytest.raises(ValidationError):
        build_network(weights, None, cfg, sensing="virtual_ground")


def test_variation_statistics():
    f = variation_factors(20000, 0.2, 3)
    assert np.median(f) == pytest.approx(1.0, abs=0.01)
    assert np.std(np.log(f)) == pytest.approx(0.2, rel=0.03)
    assert np.all(variation_factors(5, 0.0, 3) == 1.0)
    with pytest.raises(ValidationError):
        variation_factors(5, -0.1, 3)


def test_apply_variation_touches_memristors_only():
    cfg = default_config([6, 3])
    weights = random_weights([6, 3], np.random.default_rng(4))
    g = build_network(weights, None, cfg)
    gv = apply_variation(g, 0.3, seed=9)
    syn = g.res_kind == SYNAPSE
    assert np.all(gv.res_ohms[~syn] == g.res_ohms[~syn])
    assert np.all(gv.res_access == g.res_access)
    assert not np.allclose(gv.res_device[syn], g.res_device[syn])
    assert np.allclose(gv.res_ohms[syn], gv.res_device[syn] + gv.res_access[syn])
    again = apply_variation(g, 0.3, seed=9)
    assert np.array_equal(again.res_ohms, gv.res_ohms)
    assert np.array_equal(g.res_ohms, build_network(weights, None, cfg).res_ohms)


def test_meta_and_names():
    cfg = default_config([3, 2])
    g = build_network(random_weights([3, 2], np.random.default_rng(0)), None, cfg)
    assert g.input_names() == ["Vin0", "Vin1", "Vin2"]
    assert g.output_names() == ["l1_out0", "l1_out1"]
    assert g.meta["topology"] == [3, 2] and g.meta["parasitics"] is True
    assert sum(g.element_multiset().values()) == sum(1 for _ in g.elements())
