import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.constants import epsilon_0

from crossbar_sim.config import InterconnectSpec, default_config
from crossbar_sim.exceptions import DegenerateGeometry, ValidationError
from crossbar_sim.parasitics import (
    WireSegment,
    capacitance_per_length_array,
    crossbar_segments,
    effective_resistivity,
    resistivity_ratio,
    resistivity_ratio_array,
    segment_parasitics,
    wire_capacitance_per_length,
    wire_resistance,
)

nm = 1e-9
widths = st.floats(5 * nm, 500 * nm)


def test_resistance_of_one_micron():
    # 1.9e-9 * 1e-6 / (36e-9 * 22e-9), no narrow-wire correction
    assert wire_resistance(WireSegment(1e-6, 36 * nm, 22 * nm), 1.9e-9) == pytest.approx(
        2.398989898989899, rel=1e-12)


def test_scaling_switch():
    spec = InterconnectSpec(scaling_enabled=False)
    assert effective_resistivity(spec) == spec.bulk_resistivity
    spec = InterconnectSpec()
    assert effective_resistivity(spec) == pytest.approx(2.2612143761515 * 1.9e-9, rel=1e-12)


def test_no_grain_reflection_leaves_surface_term():
    assert resistivity_ratio(40 * nm, 40 * nm, 0.0, 0.0, 40 * nm) == pytest.approx(1.75)


@given(w=widths, l0=st.floats(1 * nm, 100 * nm), p=st.floats(0, 1), r=st.floats(0, 0.9))
def test_ratio_at_least_one(w, l0, p, r):
    assert resistivity_ratio(w, l0, p, r, w) >= 1.0 - 1e-12


@given(w=widths, grow=st.floats(1.01, 10), p=st.floats(0, 0.99), r=st.floats(0, 0.6))
def test_ratio_decreases_with_width_at_fixed_grain(w, grow, p, r):
    d = 40 * nm
    assert resistivity_ratio(w * grow, 39 * nm, p, r, d) < resistivity_ratio(w, 39 * nm, p, r, d)


@pytest.mark.parametrize("alpha", [0.3, 3.9, 4.1, 50.0, 5e3, 3.9e4, 1e8])
def test_array_bracket_against_mpmath(alpha):
    with mp.workdps(50):
        a = mp.mpf(alpha)
        ref = float(1 / (1 - mp.mpf(3) / 2 * a + 3 * a ** 2 - 3 * a ** 3 * mp.log(1 + 1 / a)))
    # r = 0.5 makes alpha = l0 / d
    got = resistivity_ratio_array(36 * nm, 39 * nm, 1.0, 0.5, 39 * nm / alpha)
    assert float(got) == pytest.approx(ref, rel=1e-12)


def test_degenerate_scalar_bracket():
    with pytest.raises(DegenerateGeometry):
        resistivity_ratio(36 * nm, 39 * nm, 0.25, 0.99999, 0.01 * nm)


@given(eps=st.floats(1, 40), k=st.floats(0.1, 10))
def test_capacitance_linear_in_permittivity(eps, k):
    spec = InterconnectSpec(inter_wire_spacing_s=72 * nm, relative_permittivity=eps)
    scaled = InterconnectSpec(inter_wire_spacing_s=72 * nm, relative_permittivity=eps * k)
    assert wire_capacitance_per_length(scaled) == pytest.approx(
        k * wire_capacitance_per_length(spec), rel=1e-12)


@given(s=st.floats(10 * nm, 500 * nm), grow=st.floats(1.01, 5))
def test_coupling_falls_with_spacing(s, grow):
    spec = InterconnectSpec()
    assert wire_capacitance_per_length(spec, s * grow) < wire_capacitance_per_length(spec, s)


def test_capacitance_needs_spacing():
    with pytest.raises(ValidationError):
        wire_capacitance_per_length(InterconnectSpec())


def test_array_forms_broadcast():
    c = capacitance_per_length_array(36 * nm, 22 * nm, 20 * nm, [72 * nm, 144 * nm],
                                     20 * epsilon_0)
    assert c.shape == (2,) and c[0] > c[1]
    assert c[0] == pytest.approx(5.227490668838417e-10, rel=1e-12)


def test_zero_length_segment():
    pair = segment_parasitics(WireSegment(0.0, 36 * nm, 22 * nm), InterconnectSpec(),
                              72 * nm)
    assert pair.resistance == 0.0 and pair.capacitance == 0.0
    with pytest.raises(ValidationError):
        WireSegment(-1e-9, 36 * nm, 22 * nm)


def test_crossbar_segments_follow_bitcell():
    cfg = default_config([4, 2])
    row, col = crossbar_segments(cfg)
    rho = effective_resistivity(cfg.interconnect)
    assert row.resistance == pytest.approx(rho * 135 * nm / (36 * nm * 22 * nm))
    assert col.resistance == pytest.approx(rho * 108 * nm / (36 * nm * 22 * nm))
    c_per_m = wire_capacitance_per_length(cfg.interconnect, 72 * nm)
    assert row.capacitance == pytest.approx(c_per_m * 135 * nm)
    assert math.isclose(row.resistance / col.resistance, 15 / 12)
