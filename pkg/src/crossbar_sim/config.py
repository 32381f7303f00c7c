"""Simulation hyperparameters, device/bitcell presets and the config file.

Config files are flat TOML: every key is a dotted name such as
``device.r_low`` or ``partitions.horizontal``.  Nested tables are accepted
and flattened, so ``[device]\\nr_low = 8.5e3`` is equivalent.  The complete
key list lives in :data:`SCHEMA`; ``docs/config.md`` in the repository
mirrors it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib as tomli
except ImportError:          # Python < 3.11
    import tomli
from scipy.constants import epsilon_0

from .exceptions import (
    DeviceError,
    ParseError,
    UnknownKey,
    UnknownPreset,
    ValidationError,
)


class BitcellKind(str, Enum):
    ONE_T_ONE_R = "1t1r"
    TWO_T_ONE_R = "2t1r"
    ONE_TG_ONE_R = "1tg1r"


class NeuronKind(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"


class MappingScheme(str, Enum):
    BINARY = "binary"
    LINEAR = "linear"


# (r_low, r_high) in ohms
DEVICE_PRESETS = {
    "mram": (8.5e3, 25.5e3),
    "rram": (2.5e3, 100e3),
    "cbram": (10e3, 1e6),
    "pcm": (78e3, 202e3),
}

# (length in lambda, width in lambda, access on-resistance in ohms)
BITCELL_PRESETS = {
    BitcellKind.ONE_T_ONE_R: (15, 12, 5e3),
    BitcellKind.TWO_T_ONE_R: (15, 12, 5e3),
    BitcellKind.ONE_TG_ONE_R: (15, 12, 2.5e3),
}

DEFAULT_LAMBDA = 9e-9
# Bulk resistivity as printed in the prose of the source model (not the
# table, which carries a sign typo); see README "Known discrepancies".
BULK_RESISTIVITY_CU = 1.9e-9


@dataclass(frozen=True)
class NetworkTopology:
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValidationError("needs at least an input and an output layer", "topology")
        if any(s < 1 for s in sizes):
            raise ValidationError("layer sizes must be >= 1", "topology")

    @property
    def n_layers(self) -> int:
        """Number of weight layers (crossbars)."""
        return len(self.layer_sizes) - 1

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def __len__(self):
        return len(self.layer_sizes)

    def __getitem__(self, i):
        return self.layer_sizes[i]


@dataclass(frozen=True)
class DeviceTech:
    name: str
    r_low: float
    r_high: float
    variation_sigma: float = 0.0

    def __post_init__(self):
        if not (self.r_low > 0 and self.r_high > 0):
            raise ValidationError("resistances must be positive", "device")
        if self.r_high <= self.r_low:
            raise DeviceError(
                f"r_high ({self.r_high:g}) must exceed r_low ({self.r_low:g})", "device.r_high"
            )
        if self.variation_sigma < 0:
            raise ValidationError("must be >= 0", "device.variation_sigma")

    @property
    def g_max(self) -> float:
        return 1.0 / self.r_low

    @property
    def g_min(self) -> float:
        return 1.0 / self.r_high


@dataclass(frozen=True)
class BitcellGeometry:
    kind: BitcellKind
    length: float
    width: float
    lambda_: float = DEFAULT_LAMBDA
    access_resistance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", BitcellKind(self.kind))
        for name in ("length", "width", "lambda_"):
            if not getattr(self, name) > 0:
                raise ValidationError("must be > 0", f"bitcell.{name.rstrip('_')}")
        if self.access_resistance < 0:
            raise ValidationError("must be >= 0", "bitcell.access_resistance")


@dataclass(frozen=True)
class InterconnectSpec:
    bulk_resistivity: float = BULK_RESISTIVITY_CU
    thickness: float = 22e-9
    width: float = 4 * DEFAULT_LAMBDA
    inter_metal_spacing_h: float = 20e-9
    inter_wire_spacing_s: float | None = None
    specular_fraction_p: float = 0.25
    grain_reflection_r: float = 0.3
    mean_free_path_l0: float = 39e-9
    grain_size_d: float | None = None
    scaling_enabled: bool = True
    relative_permittivity: float = 20.0
    cap_model: str = "L"

    def __post_init__(self):
        for name in ("bulk_resistivity", "thickness", "width", "inter_metal_spacing_h",
                     "mean_free_path_l0", "relative_permittivity"):
            if not getattr(self, name) > 0:
                raise ValidationError("must be > 0", f"interconnect.{name}")
        for name in ("inter_wire_spacing_s", "grain_size_d"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError("must be > 0", f"interconnect.{name}")
        if not 0 <= self.specular_fraction_p <= 1:
            raise ValidationError("must lie in [0, 1]", "interconnect.p")
        if not 0 <= self.grain_reflection_r < 1:
            raise ValidationError("must lie in [0, 1)", "interconnect.r")
        if self.cap_model not in ("L", "pi"):
            raise ValidationError("must be 'L' or 'pi'", "interconnect.cap_model")

    @property
    def permittivity(self) -> float:
        return self.relative_permittivity * epsilon_0

    @property
    def grain_size(self) -> float:
        return self.width if self.grain_size_d is None else self.grain_size_d


@dataclass(frozen=True)
class NeuronModel:
    kind: NeuronKind = NeuronKind.SIGMOID
    gain: float = 5.0
    v_high: float = 0.8
    v_low: float = -0.8
    input_resistance: float = 10e3
    output_resistance: float = 100.0
    output_capacitance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NeuronKind(self.kind))
        if not self.v_low < self.v_high:
            raise ValidationError("v_low must be below v_high", "neuron.v_low")
        if not self.gain > 0:
            raise ValidationError("must be > 0", "neuron.gain")
        if not (self.input_resistance > 0 and self.output_resistance > 0):
            raise ValidationError("resistances must be > 0", "neuron.r_in")
        if self.output_capacitance < 0:
            raise ValidationError("must be >= 0", "neuron.c_out")

    @property
    def v_mid(self) -> float:
        return 0.5 * (self.v_high + self.v_low)

    @property
    def swing(self) -> float:
        return self.v_high - self.v_low


@dataclass(frozen=True)
class SimConfig:
    topology: NetworkTopology
    device: DeviceTech
    bitcell: BitcellGeometry
    interconnect: InterconnectSpec
    neuron: NeuronModel
    vdd: float = 0.8
    vss: float = -0.8
    horizontal_partitions: tuple[int, ...] | None = None
    vertical_partitions: tuple[int, ...] | None = None
    sampling_time: float = 1e-9
    batch_size: int = 50
    parasitics_enabled: bool = True
    rng_seed: int = 0
    mapping: MappingScheme = MappingScheme.BINARY
    input_noise: float = 0.0
    time_step: float | None = None
    settle_fraction: float = 0.02
    rise_fraction: float = 0.01
    # keys that were given explicitly; used to re-derive defaults on override
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        n = self.topology.n_layers
        sizes = self.topology.layer_sizes
        hp = tuple(self.horizontal_partitions or (1,) * n)
        vp = tuple(self.vertical_partitions or (1,) * n)
        object.__setattr__(self, "horizontal_partitions", tuple(int(h) for h in hp))
        object.__setattr__(self, "vertical_partitions", tuple(int(v) for v in vp))
        object.__setattr__(self, "mapping", MappingScheme(self.mapping))
        if len(hp) != n:
            raise ValidationError(f"expected {n} entries, got {len(hp)}", "partitions.horizontal")
        if len(vp) != n:
            raise ValidationError(f"expected {n} entries, got {len(vp)}", "partitions.vertical")
        for j in range(n):
            if not 1 <= hp[j] <= sizes[j] + 1:
                raise ValidationError(
                    f"layer {j + 1}: {hp[j]} partitions for {sizes[j] + 1} rows",
                    "partitions.horizontal")
            if not 1 <= vp[j] <= sizes[j + 1]:
                raise ValidationError(
                    f"layer {j + 1}: {vp[j]} partitions for {sizes[j + 1]} columns",
                    "partitions.vertical")
        if not self.vdd > self.vss:
            raise ValidationError("vdd must exceed vss", "voltages.vdd")
        if not self.sampling_time > 0:
            raise ValidationError("must be > 0", "sim.t_sampling")
        if int(self.batch_size) < 1:
            raise ValidationError("must be >= 1", "sim.batch_size")
        if self.rng_seed < 0:
            raise ValidationError("must be unsigned", "sim.seed")
        if self.input_noise < 0:
            raise ValidationError("must be >= 0", "sim.input_noise")
        if self.time_step is not None and not self.time_step > 0:
            raise ValidationError("must be > 0", "sim.dt")
        if not 0 < self.settle_fraction < 1:
            raise ValidationError("must lie in (0, 1)", "sim.settle_fraction")
        if not 0 <= self.rise_fraction < 1:
            raise ValidationError("must lie in [0, 1)", "sim.rise_fraction")

    @property
    def dt(self) -> float:
        return self.time_step if self.time_step is not None else self.sampling_time / 100

    @property
    def wire_spacing(self) -> float:
        """Inter-wire spacing; defaults to bitcell pitch minus wire width."""
        s = self.interconnect.inter_wire_spacing_s
        if s is None:
            s = self.bitcell.width - self.interconnect.width
            if s <= 0:
                raise ValidationError(
                    "bitcell width leaves no room between wires; set interconnect.s",
                    "interconnect.s")
        return s


# --------------------------------------------------------------------------
# presets

def builtin_preset(name: str, lambda_: float = DEFAULT_LAMBDA):
    """Return the bundled :class:`DeviceTech` or :class:`BitcellGeometry` named ``name``.

    >>> builtin_preset("pcm").r_low
    78000.0
    """
    key = str(name).lower()
    if key in DEVICE_PRESETS:
        r_low, r_high = DEVICE_PRESETS[key]
        return DeviceTech(key, r_low, r_high)
    try:
        kind = BitcellKind(key)
    except ValueError:
        raise UnknownPreset(
            f"no preset {name!r}; choose from {', '.join(preset_names())}") from None
    n_len, n_wid, r_acc = BITCELL_PRESETS[kind]
    return BitcellGeometry(kind, n_len * lambda_, n_wid * lambda_, lambda_, r_acc)


def preset_names() -> list[str]:
    return list(DEVICE_PRESETS) + [k.value for k in BITCELL_PRESETS]


# --------------------------------------------------------------------------
# schema

@dataclass(frozen=True)
class Key:
    type: str       # int, float, bool, str, int_list
    doc: str
    group: str | None = None  # hyperparameter group this key realises


SCHEMA: dict[str, Key] = {
    "topology": Key("int_list", "neurons per layer, input first", "Network Topology"),
    "device.name": Key("str", "preset name or free label", "Synaptic Technology"),
    "device.r_low": Key("float", "low resistance state [ohm]", "Synaptic Technology"),
    "device.r_high": Key("float", "high resistance state [ohm]", "Synaptic Technology"),
    "device.variation_sigma": Key("float", "lognormal sigma of device conductance"),
    "bitcell.kind": Key("str", "1t1r | 2t1r | 1tg1r", "Synapse Bitcell Size"),
    "bitcell.lambda": Key("float", "layout unit [m]", "Synapse Bitcell Size"),
    "bitcell.length": Key("float", "bitcell length [m], default 15 lambda", "Synapse Bitcell Size"),
    "bitcell.width": Key("float", "bitcell width [m], default 12 lambda", "Synapse Bitcell Size"),
    "bitcell.access_resistance": Key("float", "access device on-resistance [ohm]",
                                     "Transistor Technology Node"),
    "interconnect.rho": Key("float", "bulk resistivity [ohm m]", "Interconnect"),
    "interconnect.thickness": Key("float", "metal thickness T [m]", "Interconnect"),
    "interconnect.width": Key("float", "metal width W [m], default 4 lambda", "Interconnect"),
    "interconnect.h": Key("float", "inter-metal layer spacing H [m]", "Interconnect"),
    "interconnect.s": Key("float", "inter-wire spacing S [m]", "Interconnect"),
    "interconnect.p": Key("float", "specular scattering fraction", "Interconnect"),
    "interconnect.r": Key("float", "grain-boundary reflection probability", "Interconnect"),
    "interconnect.l0": Key("float", "electron mean free path [m]", "Interconnect"),
    "interconnect.d": Key("float", "grain size [m], default W", "Interconnect"),
    "interconnect.scaling": Key("bool", "apply narrow-wire resistivity scaling", "Interconnect"),
    "interconnect.epsilon_r": Key("float", "relative permittivity of inter-metal dielectric",
                                  "Interconnect"),
    "interconnect.cap_model": Key("str", "L | pi segment capacitance placement"),
    "voltages.vdd": Key("float", "positive supply [V]", "Nominal Voltages"),
    "voltages.vss": Key("float", "negative supply [V]", "Nominal Voltages"),
    "partitions.horizontal": Key("int_list", "horizontal partitions per layer",
                                 "Horizontal Partitioning"),
    "partitions.vertical": Key("int_list", "vertical partitions per layer",
                               "Vertical Partitioning"),
    "partitions.subarray": Key("int_list", "[rows, cols]; derive partitions from subarray size",
                               "Horizontal Partitioning"),
    "neuron.kind": Key("str", "sigmoid | tanh | relu", "Neuron Circuit Model"),
    "neuron.gain": Key("float", "transfer slope at midpoint [V/V]", "Neuron Circuit Model"),
    "neuron.v_high": Key("float", "upper output level [V], default vdd", "Neuron Circuit Model"),
    "neuron.v_low": Key("float", "lower output level [V], default vss", "Neuron Circuit Model"),
    "neuron.r_in": Key("float", "sense resistance per column line [ohm]", "Neuron Circuit Model"),
    "neuron.r_out": Key("float", "output resistance [ohm]", "Neuron Circuit Model"),
    "neuron.c_out": Key("float", "output node capacitance [F]", "Neuron Circuit Model"),
    "sim.t_sampling": Key("float", "interval per sample in batched transient [s]",
                          "Sampling Time"),
    "sim.batch_size": Key("int", "samples per simulation batch"),
    "sim.parasitics": Key("bool", "insert interconnect parasitics"),
    "sim.seed": Key("int", "seed for variation and input noise"),
    "sim.mapping": Key("str", "binary | linear weight mapping"),
    "sim.input_noise": Key("float", "std-dev of additive Gaussian input noise [V]"),
    "sim.dt": Key("float", "transient time step [s], default t_sampling/100"),
    "sim.settle_fraction": Key("float", "settle band as a fraction of the neuron swing"),
    "sim.rise_fraction": Key("float", "PWL transition time as a fraction of t_sampling"),
}

# the hyperparameter groups every config must be able to express
HYPERPARAMETER_GROUPS = (
    "Network Topology",
    "Transistor Technology Node",
    "Nominal Voltages",
    "Neuron Circuit Model",
    "Synaptic Technology",
    "Vertical Partitioning",
    "Horizontal Partitioning",
    "Synapse Bitcell Size",
    "Interconnect",
    "Sampling Time",
)

# overriding one of these keys discards previously derived dependants
_DEPENDANTS = {
    "device.name": ("device.r_low", "device.r_high"),
    "bitcell.kind": ("bitcell.length", "bitcell.width", "bitcell.access_resistance"),
    "bitcell.lambda": ("bitcell.length", "bitcell.width", "interconnect.width"),
    "partitions.subarray": ("partitions.horizontal", "partitions.vertical"),
    "partitions.horizontal": ("partitions.subarray",),
    "partitions.vertical": ("partitions.subarray",),
}


def _coerce(key: str, value: Any) -> Any:
    kind = SCHEMA[key].type
    try:
        if kind == "int_list":
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                raise TypeError
            out = []
            for v in value:
                if isinstance(v, bool) or float(v) != int(v):
                    raise TypeError
                out.append(int(v))
            return tuple(out)
        if kind == "int":
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if kind == "float":
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == "bool":
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            if not isinstance(value, bool):
                raise TypeError
            return value
        if not isinstance(value, str):
            raise TypeError
        return value
    except (TypeError, ValueError):
        raise ValidationError(f"expected {kind}, got {value!r}", key) from None


def flatten(tree: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat = {}
    for k, v in tree.items():
        name = f"{prefix}{k}"
        if isinstance(v, Mapping):
            flat.update(flatten(v, name + "."))
        else:
            flat[name] = v
    return flat


def _check_keys(flat: Mapping[str, Any]):
    for k in flat:
        if k not in SCHEMA:
            raise UnknownKey(k)


def from_flat(flat: Mapping[str, Any]) -> SimConfig:
    """Resolve a flat key mapping into a validated :class:`SimConfig`."""
    _check_keys(flat)
    raw = {k: _coerce(k, v) for k, v in flat.items()}
    get = raw.get

    if "topology" not in raw:
        raise ValidationError("required", "topology")
    topology = NetworkTopology(raw["topology"])

    dev_name = get("device.name")
    if dev_name is None:
        # a bare resistance override modifies the default preset
        preset = DEVICE_PRESETS["mram"]
        dev_name = "custom" if "device.r_low" in raw or "device.r_high" in raw else "mram"
    else:
        preset = DEVICE_PRESETS.get(dev_name.lower())
    if preset is not None:
        dev_name = dev_name.lower()
    elif "device.r_low" not in raw or "device.r_high" not in raw:
        raise ValidationError(
            f"{dev_name!r} is not a preset; give device.r_low and device.r_high", "device.name")
    r_low = get("device.r_low", preset[0] if preset else None)
    r_high = get("device.r_high", preset[1] if preset else None)
    device = DeviceTech(dev_name, r_low, r_high, get("device.variation_sigma", 0.0))

    try:
        kind = BitcellKind(get("bitcell.kind", "1t1r").lower())
    except ValueError:
        raise ValidationError(f"unknown bitcell kind {get('bitcell.kind')!r}",
                              "bitcell.kind") from None
    lam = get("bitcell.lambda", DEFAULT_LAMBDA)
    n_len, n_wid, r_acc = BITCELL_PRESETS[kind]
    bitcell = BitcellGeometry(
        kind,
        get("bitcell.length", n_len * lam),
        get("bitcell.width", n_wid * lam),
        lam,
        get("bitcell.access_resistance", r_acc),
    )

    interconnect = InterconnectSpec(
        bulk_resistivity=get("interconnect.rho", BULK_RESISTIVITY_CU),
        thickness=get("interconnect.thickness", 22e-9),
        width=get("interconnect.width", 4 * lam),
        inter_metal_spacing_h=get("interconnect.h", 20e-9),
        inter_wire_spacing_s=get("interconnect.s"),
        specular_fraction_p=get("interconnect.p", 0.25),
        grain_reflection_r=get("interconnect.r", 0.3),
        mean_free_path_l0=get("interconnect.l0", 39e-9),
        grain_size_d=get("interconnect.d"),
        scaling_enabled=get("interconnect.scaling", True),
        relative_permittivity=get("interconnect.epsilon_r", 20.0),
        cap_model=get("interconnect.cap_model", "L"),
    )

    vdd = get("voltages.vdd", 0.8)
    vss = get("voltages.vss", -0.8)
    if not vdd > vss:
        raise ValidationError("vdd must exceed vss", "voltages.vdd")
    try:
        nkind = NeuronKind(get("neuron.kind", "sigmoid").lower())
    except ValueError:
        raise ValidationError(f"unknown neuron kind {get('neuron.kind')!r}",
                              "neuron.kind") from None
    neuron = NeuronModel(
        kind=nkind,
        gain=get("neuron.gain", 5.0),
        v_high=get("neuron.v_high", vdd),
        v_low=get("neuron.v_low", vss),
        input_resistance=get("neuron.r_in", 10e3),
        output_resistance=get("neuron.r_out", 100.0),
        output_capacitance=get("neuron.c_out", 0.0),
    )

    hp, vp = get("partitions.horizontal"), get("partitions.vertical")
    if "partitions.subarray" in raw:
        if hp is not None or vp is not None:
            raise ValidationError("give either a subarray size or explicit partition lists",
                                  "partitions.subarray")
        sub = raw["partitions.subarray"]
        if len(sub) != 2 or min(sub) < 1:
            raise ValidationError("expected [rows, cols] >= 1", "partitions.subarray")
        from .partition import plan_for_subarray
        hp, vp = plan_for_subarray(topology, sub[0], sub[1])

    mapping = get("sim.mapping", "binary").lower()
    if mapping not in ("binary", "linear"):
        raise ValidationError(f"unknown scheme {mapping!r}", "sim.mapping")

    return SimConfig(
        topology=topology,
        device=device,
        bitcell=bitcell,
        interconnect=interconnect,
        neuron=neuron,
        vdd=vdd,
        vss=vss,
        horizontal_partitions=hp,
        vertical_partitions=vp,
        sampling_time=get("sim.t_sampling", 1e-9),
        batch_size=get("sim.batch_size", 50),
        parasitics_enabled=get("sim.parasitics", True),
        rng_seed=get("sim.seed", 0),
        mapping=mapping,
        input_noise=get("sim.input_noise", 0.0),
        time_step=get("sim.dt"),
        settle_fraction=get("sim.settle_fraction", 0.02),
        rise_fraction=get("sim.rise_fraction", 0.01),
        raw=raw,
    )


def to_flat(cfg: SimConfig) -> dict[str, Any]:
    """Fully resolved flat view of ``cfg`` (``None`` values omitted)."""
    ic = cfg.interconnect
    flat = {
        "topology": list(cfg.topology.layer_sizes),
        "device.name": cfg.device.name,
        "device.r_low": cfg.device.r_low,
        "device.r_high": cfg.device.r_high,
        "device.variation_sigma": cfg.device.variation_sigma,
        "bitcell.kind": cfg.bitcell.kind.value,
        "bitcell.lambda": cfg.bitcell.lambda_,
        "bitcell.length": cfg.bitcell.length,
        "bitcell.width": cfg.bitcell.width,
        "bitcell.access_resistance": cfg.bitcell.access_resistance,
        "interconnect.rho": ic.bulk_resistivity,
        "interconnect.thickness": ic.thickness,
        "interconnect.width": ic.width,
        "interconnect.h": ic.inter_metal_spacing_h,
        "interconnect.s": ic.inter_wire_spacing_s,
        "interconnect.p": ic.specular_fraction_p,
        "interconnect.r": ic.grain_reflection_r,
        "interconnect.l0": ic.mean_free_path_l0,
        "interconnect.d": ic.grain_size_d,
        "interconnect.scaling": ic.scaling_enabled,
        "interconnect.epsilon_r": ic.relative_permittivity,
        "interconnect.cap_model": ic.cap_model,
        "voltages.vdd": cfg.vdd,
        "voltages.vss": cfg.vss,
        "partitions.horizontal": list(cfg.horizontal_partitions),
        "partitions.vertical": list(cfg.vertical_partitions),
        "neuron.kind": cfg.neuron.kind.value,
        "neuron.gain": cfg.neuron.gain,
        "neuron.v_high": cfg.neuron.v_high,
        "neuron.v_low": cfg.neuron.v_low,
        "neuron.r_in": cfg.neuron.input_resistance,
        "neuron.r_out": cfg.neuron.output_resistance,
        "neuron.c_out": cfg.neuron.output_capacitance,
        "sim.t_sampling": cfg.sampling_time,
        "sim.batch_size": cfg.batch_size,
        "sim.parasitics": cfg.parasitics_enabled,
        "sim.seed": cfg.rng_seed,
        "sim.mapping": cfg.mapping.value,
        "sim.input_noise": cfg.input_noise,
        "sim.dt": cfg.time_step,
        "sim.settle_fraction": cfg.settle_fraction,
        "sim.rise_fraction": cfg.rise_fraction,
    }
    return {k: v for k, v in flat.items() if v is not None}


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, int):
        return str(v)
    return json.dumps(str(v))


def serialize(cfg: SimConfig) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in to_flat(cfg).items()]
    return "\n".join(lines) + "\n"


def parse_value(text: str) -> Any:
    """Parse a ``--set`` right-hand side; bare words fall back to strings."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def parse_override(item: str) -> tuple[str, Any]:
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ValidationError(f"expected key=value, got {item!r}")
    if key not in SCHEMA:
        raise UnknownKey(key)
    return key, parse_value(value.strip())


def apply_overrides(base: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
    """Merge ``overrides`` into a flat raw mapping, dropping stale derived keys."""
    _check_keys(overrides)
    merged = dict(base)
    for key in overrides:
        for dep in _DEPENDANTS.get(key, ()):
            if dep not in overrides:
                merged.pop(dep, None)
    merged.update(overrides)
    return merged


def with_overrides(cfg: SimConfig, overrides: Mapping[str, Any]) -> SimConfig:
    return from_flat(apply_overrides(cfg.raw or to_flat(cfg), overrides))


def loads_config(text: str, overrides: Mapping[str, Any] | None = None) -> SimConfig:
    try:
        tree = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ParseError(f"malformed config: {exc}") from None
    flat = flatten(tree)
    if overrides:
        flat = apply_overrides(flat, overrides)
    return from_flat(flat)


def load_config(path, overrides: Mapping[str, Any] | None = None) -> SimConfig:
    """Load, default and validate a config file.

    Raises :class:`ParseError` for malformed TOML, :class:`ValidationError`
    (naming the key) for invariant violations and :class:`DeviceError` when
    ``r_high <= r_low``.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return loads_config(text, overrides)


def default_config(topology, **overrides) -> SimConfig:
    """Config with every default applied; ``overrides`` use underscores for dots.

    >>> default_config([4, 2], device__name="pcm").device.r_low
    78000.0
    """
    flat = {"topology": list(topology)}
    flat.update({k.replace("__", "."): v for k, v in overrides.items()})
    return from_flat(flat)


def config_fields(cfg: SimConfig) -> dict[str, Any]:
    """Field-by-field comparison helper (ignores ``raw``)."""
    return {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.compare}
