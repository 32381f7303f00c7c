import pytest
from hypothesis import given
from hypothesis import strategies as st

from crossbar_sim.config import (
    DEVICE_PRESETS,
    HYPERPARAMETER_GROUPS,
    SCHEMA,
    BitcellGeometry,
    DeviceTech,
    builtin_preset,
    config_fields,
    default_config,
    load_config,
    loads_config,
    parse_override,
    serialize,
    to_flat,
    with_overrides,
)
from crossbar_sim.exceptions import (
    DeviceError,
    ParseError,
    UnknownKey,
    UnknownPreset,
    ValidationError,
)


def test_device_presets():
    assert builtin_preset("mram") == DeviceTech("mram", 8.5e3, 25.5e3)
    assert builtin_preset("RRAM").r_high == 100e3
    assert builtin_preset("cbram").r_high == 1e6
    assert builtin_preset("pcm").r_low == 78e3


def test_bitcell_presets_scale_with_lambda():
    cell = builtin_preset("1t1r")
    assert isinstance(cell, BitcellGeometry)
    assert cell.length == pytest.approx(15 * 9e-9)
    assert cell.width == pytest.approx(12 * 9e-9)
    assert builtin_preset("1tg1r", lambda_=7e-9).width == pytest.approx(84e-9)


def test_unknown_preset():
    with pytest.raises(UnknownPreset):
        builtin_preset("sram")


def test_defaults():
    cfg = default_config([4, 3, 2])
    assert cfg.device.name == "mram"
    assert cfg.vdd == 0.8 and cfg.vss == -0.8
    assert cfg.neuron.v_high == cfg.vdd and cfg.neuron.v_low == cfg.vss
    assert cfg.horizontal_partitions == (1, 1)
    assert cfg.interconnect.width == pytest.approx(36e-9)
    assert cfg.wire_spacing == pytest.approx(72e-9)
    assert cfg.dt == pytest.approx(cfg.sampling_time / 100)


def test_every_schema_group_is_known():
    groups = {k.group for k in SCHEMA.values() if k.group}
    assert groups == set(HYPERPARAMETER_GROUPS)


def test_nested_and_flat_tables_agree():
    flat = loads_config('topology = [4, 2]\n"device.r_low" = 9e3\n"device.r_high" = 3e4\n')
    nested = loads_config("topology = [4, 2]\n[device]\nr_low = 9e3\nr_high = 3e4\n")
    assert config_fields(flat) == config_fields(nested)
    assert flat.device.name == "custom"


def test_unknown_key_is_named():
    with pytest.raises(UnknownKey) as exc:
        loads_config("topology = [4, 2]\n[device]\nr_lo = 1\n")
    assert exc.value.key == "device.r_lo"


def test_malformed_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("topology = [4, 2\n")
    with pytest.raises(ParseError):
        load_config(p)
    with pytest.raises(ParseError):
        load_config(tmp_path / "missing.toml")


@pytest.mark.parametrize("r_high", [8.5e3, 1e3])
def test_r_high_not_above_r_low(r_high):
    with pytest.raises(DeviceError) as exc:
        default_config([4, 2], device__r_high=r_high)
    assert exc.value.key == "device.r_high"


@pytest.mark.parametrize("overrides, key", [
    ({"partitions.horizontal": [7]}, "partitions.horizontal"),
    ({"partitions.vertical": [3]}, "partitions.vertical"),
    ({"partitions.horizontal": [1, 1]}, "partitions.horizontal"),
    ({"voltages.vdd": -1.0}, "voltages.vdd"),
    ({"interconnect.p": 1.5}, "interconnect.p"),
    ({"sim.batch_size": 0}, "sim.batch_size"),
    ({"neuron.kind": "step"}, "neuron.kind"),
])
def test_validation_names_key(overrides, key):
    with pytest.raises(ValidationError) as exc:
        with_overrides(default_config([5, 2]), overrides)
    assert exc.value.key == key


def test_type_errors():
    with pytest.raises(ValidationError):
        default_config([4, 2], sim__batch_size=2.5)
    with pytest.raises(ValidationError):
        default_config([4, 2], sim__parasitics="yes")


def test_subarray_plan():
    cfg = default_config([100, 32, 10], partitions__subarray=[32, 32])
    assert cfg.horizontal_partitions == (4, 2)
    assert cfg.vertical_partitions == (1, 1)
    with pytest.raises(ValidationError):
        default_config([100, 32, 10], partitions__subarray=[32, 32],
                       partitions__horizontal=[1, 1])


def test_override_drops_derived_values():
    cfg = default_config([4, 2], device__name="rram")
    assert with_overrides(cfg, {"device.name": "pcm"}).device.r_low == 78e3
    cfg = with_overrides(cfg, {"bitcell.lambda": 7e-9})
    assert cfg.bitcell.length == pytest.approx(105e-9)
    assert cfg.interconnect.width == pytest.approx(28e-9)
    sub = default_config([100, 32, 10], partitions__subarray=[32, 32])
    flat = with_overrides(sub, {"partitions.horizontal": [2, 1]})
    assert flat.horizontal_partitions == (2, 1) and flat.vertical_partitions == (1, 1)


def test_parse_override():
    assert parse_override("device.r_low=5e3") == ("device.r_low", 5e3)
    assert parse_override("partitions.horizontal=[2, 1]") == ("partitions.horizontal", [2, 1])
    assert parse_override("device.name=pcm") == ("device.name", "pcm")
    with pytest.raises(UnknownKey):
        parse_override("nope=1")
    with pytest.raises(ValidationError):
        parse_override("device.r_low")


@given(
    preset=st.sampled_from(sorted(DEVICE_PRESETS)),
    sizes=st.lists(st.integers(1, 40), min_size=2, max_size=4),
    parasitics=st.booleans(),
    vdd=st.floats(0.1, 2.0),
    cap=st.sampled_from(["L", "pi"]),
    kind=st.sampled_from(["1t1r", "2t1r", "1tg1r"]),
)
def test_serialize_round_trip(preset, sizes, parasitics, vdd, cap, kind):
    cfg = default_config(sizes, device__name=preset, sim__parasitics=parasitics,
                         voltages__vdd=vdd, voltages__vss=-vdd, interconnect__cap_model=cap,
                         bitcell__kind=kind)
    again = loads_config(serialize(cfg))
    assert config_fields(again) == config_fields(cfg)
    assert to_flat(again) == to_flat(cfg)
