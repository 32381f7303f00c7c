"""Circuit graph of a crossbar network and the builders that produce it.

Every layer is a (L_j + 1) x L_{j+1} matrix of differential bitcells: row 0
is driven by the ``vdd`` rail (bias), rows 1..L_j by the layer inputs.  A
bitcell holds two memristors, one to the output's positive column line and
one to its negative column line.  Column lines end on the sense node of the
output neuron, which turns the differential column voltage into the next
layer's input voltage.

With parasitics enabled, each bitcell owns one row-line segment and one
segment on each of its two column lines; every segment carries a series R
and a shunt C.  Partitions split a layer into independent subarrays whose
row lines restart at the input drivers and whose column lines merge on the
shared sense node.
"""

from __future__ import annotations

import copy
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .config import DeviceTech, MappingScheme, NeuronModel, SimConfig
from .exceptions import DimensionMismatch, ValidationError
from .parasitics import crossbar_segments
from .partition import PartitionGrid, PartitionPlan, plan_from_config

R_SHORT = 1.0      # floor for zero-length connections [ohm]
G_OPEN = 1e-12     # shunt conductance added by the solver on every node [S]

RES_KINDS = ("synapse", "wire", "link")
SYNAPSE, WIRE, LINK = range(3)


class Resistor(NamedTuple):
    n1: str
    n2: str
    ohms: float
    kind: str


class Capacitor(NamedTuple):
    n1: str
    n2: str
    farads: float


class VoltageSource(NamedTuple):
    name: str
    n_plus: int
    n_minus: int
    dc: float
    kind: str          # input | rail | sense


class NeuronElement(NamedTuple):
    name: str
    in_pos: int
    in_neg: int
    out: int
    model: NeuronModel


class ConductancePair(NamedTuple):
    g_pos: float
    g_neg: float


@dataclass
class LayerInfo:
    """Node bookkeeping for one layer; arrays are indexed [row, col]."""

    index: int
    inputs: np.ndarray            # row driver node per row (row 0 = vdd)
    sense_pos: np.ndarray         # per output column
    sense_neg: np.ndarray
    outputs: np.ndarray           # neuron output nodes (empty for virtual ground)
    row_nodes: np.ndarray | None = None
    colp_nodes: np.ndarray | None = None
    coln_nodes: np.ndarray | None = None
    n_synapses: int = 0
    blocks: dict = field(default_factory=dict)  # (i, j) -> (rows, cols)
    n_segments: int = 0


class CircuitGraph:
    """Nodes plus element tables.

    Node 0 is ground.  Elements are stored column-wise in numpy arrays once
    :meth:`freeze` has run; the builder calls it before returning.
    """

    def __init__(self):
        self.node_names: list[str] = ["0"]
        self.node_kinds: list[str] = ["rail"]
        self._lookup: dict[str, int] = {"0": 0}
        self._r: list[list] = [[], [], [], [], [], []]   # n1 n2 ohms kind device_r access_r
        self._c: list[list] = [[], [], []]
        self.sources: list[VoltageSource] = []
        self.neurons: list[NeuronElement] = []
        self.inputs: list[int] = []       # indices into sources, in feature order
        self.outputs: list[int] = []      # node ids (voltage outputs) or source ids (current)
        self.output_kind = "voltage"
        self.layers: list[LayerInfo] = []
        self.meta: dict = {}
        self._frozen = False

    # -- construction -------------------------------------------------------
    def add_node(self, name: str, kind: str = "internal") -> int:
        if name in self._lookup:
            raise ValidationError(f"duplicate node {name!r}")
        idx = len(self.node_names)
        self.node_names.append(name)
        self.node_kinds.append(kind)
        self._lookup[name] = idx
        return idx

    def add_nodes(self, names: Sequence[str], kind: str = "internal") -> np.ndarray:
        start = len(self.node_names)
        for name in names:
            if name in self._lookup:
                raise ValidationError(f"duplicate node {name!r}")
            self._lookup[name] = len(self.node_names)
            self.node_names.append(name)
        self.node_kinds.extend([kind] * len(names))
        return np.arange(start, start + len(names))

    def node(self, name: str) -> int:
        return self._lookup[name]

    def add_resistors(self, n1, n2, ohms, kind, device_r=None, access_r=None):
        n1 = np.atleast_1d(n1)
        size = n1.size
        ohms = np.broadcast_to(np.asarray(ohms, dtype=float), (size,))
        if np.any(~(ohms > 0)):
            # shorts are floored, opens are modelled by leaving the element out
            ohms = np.where(ohms > 0, ohms, R_SHORT)
        r = self._r
        r[0].append(n1.astype(np.int64))
        r[1].append(np.broadcast_to(np.atleast_1d(n2), (size,)).astype(np.int64))
        r[2].append(ohms.astype(float))
        r[3].append(np.full(size, kind, dtype=np.int8))
        r[4].append(np.broadcast_to(np.nan if device_r is None else device_r, (size,))
                    .astype(float))
        r[5].append(np.broadcast_to(0.0 if access_r is None else access_r, (size,)).astype(float))
        self._frozen = False

    def add_capacitors(self, n1, n2, farads):
        n1 = np.atleast_1d(n1)
        size = n1.size
        c = self._c
        c[0].append(n1.astype(np.int64))
        c[1].append(np.broadcast_to(np.atleast_1d(n2), (size,)).astype(np.int64))
        c[2].append(np.broadcast_to(np.asarray(farads, dtype=float), (size,)).astype(float))
        self._frozen = False

    def add_source(self, name, n_plus, n_minus, dc, kind) -> int:
        self.sources.append(VoltageSource(name, int(n_plus), int(n_minus), float(dc), kind))
        return len(self.sources) - 1

    def add_neuron(self, name, in_pos, in_neg, out, model) -> int:
        self.neurons.append(NeuronElement(name, int(in_pos), int(in_neg), int(out), model))
        return len(self.neurons) - 1

    def freeze(self) -> "CircuitGraph":
        def cat(parts, dtype):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        self.res_n1 = cat(self._r[0], np.int64)
        self.res_n2 = cat(self._r[1], np.int64)
        self.res_ohms = cat(self._r[2], float)
        self.res_kind = cat(self._r[3], np.int8)
        self.res_device = cat(self._r[4], float)
        self.res_access = cat(self._r[5], float)
        self._r = [[a] for a in (self.res_n1, self.res_n2, self.res_ohms, self.res_kind,
                                 self.res_device, self.res_access)]
        self.cap_n1 = cat(self._c[0], np.int64)
        self.cap_n2 = cat(self._c[1], np.int64)
        self.cap_farads = cat(self._c[2], float)
        self._c = [[a] for a in (self.cap_n1, self.cap_n2, self.cap_farads)]
        self._frozen = True
        n = len(self.node_names)
        for arr in (self.res_n1, self.res_n2, self.cap_n1, self.cap_n2):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise ValidationError("element references a missing node")
        return self

    # -- queries ------------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.node_names)

    @property
    def n_resistors(self) -> int:
        return int(self.res_ohms.size)

    @property
    def n_capacitors(self) -> int:
        return int(self.cap_farads.size)

    @property
    def synapse_mask(self) -> np.ndarray:
        return self.res_kind == SYNAPSE

    def counts(self) -> dict[str, int]:
        kinds = np.bincount(self.res_kind, minlength=len(RES_KINDS))
        return {
            "nodes": self.n_nodes,
            "resistors": self.n_resistors,
            "synapses": int(kinds[SYNAPSE]),
            "wire_segments": int(kinds[WIRE]),
            "links": int(kinds[LINK]),
            "capacitors": self.n_capacitors,
            "sources": len(self.sources),
            "neurons": len(self.neurons),
        }

    def input_names(self) -> list[str]:
        return [self.sources[i].name for i in self.inputs]

    def output_names(self) -> list[str]:
        if self.output_kind == "voltage":
            return [self.node_names[n] for n in self.outputs]
        return [self.sources[i].name for i in self.outputs]

    def elements(self):
        """Iterate elements with node names resolved (slow; meant for export/inspection)."""
        names = self.node_names
        for a, b, r, k in zip(self.res_n1, self.res_n2, self.res_ohms, self.res_kind):
            yield Resistor(names[a], names[b], float(r), RES_KINDS[k])
        for a, b, c in zip(self.cap_n1, self.cap_n2, self.cap_farads):
            yield Capacitor(names[a], names[b], float(c))
        yield from self.sources
        yield from self.neurons

    def element_multiset(self) -> Counter:
        """Connectivity fingerprint used by the netlist round-trip checks."""
        return element_multiset(self)

    def copy(self) -> "CircuitGraph":
        return copy.deepcopy(self)


def element_multiset(graph: CircuitGraph) -> Counter:
    names = graph.node_names
    items = Counter()
    for a, b, r in zip(graph.res_n1, graph.res_n2, graph.res_ohms):
        items[("R", tuple(sorted((names[a], names[b]))), float(r))] += 1
    for a, b, c in zip(graph.cap_n1, graph.cap_n2, graph.cap_farads):
        items[("C", tuple(sorted((names[a], names[b]))), float(c))] += 1
    for s in graph.sources:
        items[("V", (names[s.n_plus], names[s.n_minus]), s.dc)] += 1
    for nrn in graph.neurons:
        m = nrn.model
        items[("X", (names[nrn.in_pos], names[nrn.in_neg], names[nrn.out]),
               (m.kind.value, m.gain, m.v_high, m.v_low, m.input_resistance,
                m.output_resistance))] += 1
    return items


# --------------------------------------------------------------------------
# weights

@dataclass
class WeightMatrices:
    """Per-layer weights ``w_j`` (L_{j+1} x L_j) and biases ``b_j`` (L_{j+1})."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        if self.biases is None:
            self.biases = [np.zeros(w.shape[0]) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float).reshape(-1) for b in self.biases]
        if not self.weights or len(self.weights) != len(self.biases):
            raise DimensionMismatch("need one bias vector per weight matrix")
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2:
                raise DimensionMismatch(f"layer {j + 1}: weight matrix must be 2-D")
            if b.shape[0] != w.shape[0]:
                raise DimensionMismatch(
                    f"layer {j + 1}: {w.shape[0]} outputs but {b.shape[0]} biases")
            if j and w.shape[1] != self.weights[j - 1].shape[0]:
                raise DimensionMismatch(
                    f"layer {j + 1}: expects {w.shape[1]} inputs, "
                    f"previous layer has {self.weights[j - 1].shape[0]} outputs")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {j + 1}: non-finite weights")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    def check_topology(self, topology):
        if tuple(topology.layer_sizes) != self.layer_sizes:
            raise DimensionMismatch(
                f"weights describe {list(self.layer_sizes)}, config topology is "
                f"{list(topology.layer_sizes)}")

    def layer_scale(self, j: int) -> float:
        m = max(np.abs(self.weights[j]).max(initial=0.0), np.abs(self.biases[j]).max(initial=0.0))
        return float(m) if m > 0 else 1.0

    def augmented(self, j: int) -> np.ndarray:
        """Rows = bitcell rows (bias first), cols = outputs."""
        return np.vstack([self.biases[j][None, :], self.weights[j].T])


def map_weights(w, device: DeviceTech, scheme=MappingScheme.BINARY, w_max: float = 1.0):
    """Vectorised weight -> (g_pos, g_neg) device conductances."""
    w = np.asarray(w, dtype=float)
    g_min, g_max = device.g_min, device.g_max
    scheme = MappingScheme(scheme)
    if scheme is MappingScheme.BINARY:
        pos = w >= 0
        return np.where(pos, g_max, g_min), np.where(pos, g_min, g_max)
    if not w_max > 0:
        raise ValidationError("w_max must be > 0")
    span = g_max - g_min
    g_pos = g_min + np.clip(np.maximum(w, 0) / w_max, 0, 1) * span
    g_neg = g_min + np.clip(np.maximum(-w, 0) / w_max, 0, 1) * span
    return g_pos, g_neg


def map_weight_to_conductances(w: float, device: DeviceTech,
                               scheme=MappingScheme.BINARY, w_max: float = 1.0) -> ConductancePair:
    g_pos, g_neg = map_weights(w, device, scheme, w_max)
    return ConductancePair(float(g_pos), float(g_neg))


# --------------------------------------------------------------------------
# builders

def _names(fmt, rows, cols):
    return [fmt.format(r, c) for r in rows for c in cols]


def build_layer(graph: CircuitGraph, layer: int, w, b, grid: PartitionGrid, cfg: SimConfig,
                input_nodes: np.ndarray, sensing: str = "neuron",
                w_max: float | None = None) -> LayerInfo:
    """Append layer ``layer`` (1-based) to ``graph``.

    ``input_nodes`` are the row drivers for the L_j inputs; the bias row is
    tied to the ``vdd`` node.  Returns the node bookkeeping for the layer.
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n_out, n_in = w.shape
    if b.shape[0] != n_out or len(input_nodes) != n_in:
        raise DimensionMismatch(f"layer {layer}: weights {w.shape}, {b.shape[0]} biases, "
                                f"{len(input_nodes)} inputs")
    if grid.n_rows != n_in + 1 or grid.n_cols != n_out:
        raise DimensionMismatch(
            f"layer {layer}: partition grid is {grid.n_rows}x{grid.n_cols}, "
            f"crossbar is {n_in + 1}x{n_out}")

    aug = np.vstack([b[None, :], w.T])
    if w_max is None:
        w_max = float(np.abs(aug).max()) or 1.0
    g_pos, g_neg = map_weights(aug, cfg.device, cfg.mapping, w_max)
    r_acc = cfg.bitcell.access_resistance
    drivers = np.concatenate([[graph.node("vdd")], np.asarray(input_nodes)])

    L = layer
    sense_pos = graph.add_nodes([f"l{L}_s{c}p" for c in range(n_out)], "neuron-in")
    sense_neg = graph.add_nodes([f"l{L}_s{c}n" for c in range(n_out)], "neuron-in")
    info = LayerInfo(L, drivers, sense_pos, sense_neg, np.zeros(0, dtype=np.int64))

    rows_all, cols_all = aug.shape
    if cfg.parasitics_enabled:
        row_seg, col_seg = crossbar_segments(cfg)
        pi_model = cfg.interconnect.cap_model == "pi"
        info.row_nodes = np.zeros((rows_all, cols_all), dtype=np.int64)
        info.colp_nodes = np.zeros_like(info.row_nodes)
        info.coln_nodes = np.zeros_like(info.row_nodes)
        for i, j, rows, cols in grid.blocks():
            info.blocks[(i, j)] = (rows, cols)
            nr, nc = len(rows), len(cols)
            rn = graph.add_nodes(_names(f"l{L}_r{{}}_c{{}}", rows, cols)).reshape(nr, nc)
            pn = graph.add_nodes(_names(f"l{L}_p{{}}_c{{}}", rows, cols)).reshape(nr, nc)
            qn = graph.add_nodes(_names(f"l{L}_n{{}}_c{{}}", rows, cols)).reshape(nr, nc)
            sl = (slice(rows.start, rows.stop), slice(cols.start, cols.stop))
            info.row_nodes[sl], info.colp_nodes[sl], info.coln_nodes[sl] = rn, pn, qn

            # bitcells
            gp, gn = g_pos[sl], g_neg[sl]
            graph.add_resistors(rn.ravel(), pn.ravel(), 1.0 / gp.ravel() + r_acc, SYNAPSE,
                                1.0 / gp.ravel(), r_acc)
            graph.add_resistors(rn.ravel(), qn.ravel(), 1.0 / gn.ravel() + r_acc, SYNAPSE,
                                1.0 / gn.ravel(), r_acc)

            # row lines restart at the driver of every partition
            row_from = np.concatenate([drivers[rows.start:rows.stop, None], rn[:, :-1]], axis=1)
            graph.add_resistors(row_from.ravel(), rn.ravel(), row_seg.resistance, WIRE)
            # column lines run down to the shared sense node
            for lines, sense in ((pn, sense_pos), (qn, sense_neg)):
                to = np.concatenate([lines[1:, :], sense[None, cols.start:cols.stop]], axis=0)
                graph.add_resistors(lines.ravel(), to.ravel(), col_seg.resistance, WIRE)
            info.n_segments += 3 * nr * nc

            if pi_model:
                half_r, half_c = 0.5 * row_seg.capacitance, 0.5 * col_seg.capacitance
                graph.add_capacitors(row_from.ravel(), 0, half_r)
                graph.add_capacitors(rn.ravel(), 0, half_r)
                for lines, sense in ((pn, sense_pos), (qn, sense_neg)):
                    to = np.concatenate([lines[1:, :], sense[None, cols.start:cols.stop]], axis=0)
                    graph.add_capacitors(lines.ravel(), 0, half_c)
                    graph.add_capacitors(to.ravel(), 0, half_c)
            else:
                graph.add_capacitors(rn.ravel(), 0, row_seg.capacitance)
                graph.add_capacitors(pn.ravel(), 0, col_seg.capacitance)
                graph.add_capacitors(qn.ravel(), 0, col_seg.capacitance)
    else:
        # ideal lines: every row is equipotential with its driver and every
        # column with its sense node, so partition boundaries vanish
        for i, j, rows, cols in grid.blocks():
            info.blocks[(i, j)] = (rows, cols)
        rr, cc = np.meshgrid(np.arange(rows_all), np.arange(cols_all), indexing="ij")
        rr, cc = rr.ravel(), cc.ravel()
        gp, gn = g_pos.ravel(), g_neg.ravel()
        graph.add_resistors(drivers[rr], sense_pos[cc], 1.0 / gp + r_acc, SYNAPSE, 1.0 / gp, r_acc)
        graph.add_resistors(drivers[rr], sense_neg[cc], 1.0 / gn + r_acc, SYNAPSE, 1.0 / gn, r_acc)

    info.n_synapses = 2 * rows_all * cols_all

    if sensing == "neuron":
        outs = graph.add_nodes([f"l{L}_out{c}" for c in range(n_out)], "neuron-out")
        for c in range(n_out):
            graph.add_neuron(f"N{L}_{c}", sense_pos[c], sense_neg[c], outs[c], cfg.neuron)
        if cfg.neuron.output_capacitance > 0:
            graph.add_capacitors(outs, 0, cfg.neuron.output_capacitance)
        info.outputs = outs
    elif sensing == "virtual_ground":
        for c in range(n_out):
            graph.add_source(f"Vs{L}_{c}p", sense_pos[c], 0, 0.0, "sense")
            graph.add_source(f"Vs{L}_{c}n", sense_neg[c], 0, 0.0, "sense")
    else:
        raise ValidationError(f"unknown sensing mode {sensing!r}")
    graph.layers.append(info)
    return info


def build_network(weights: WeightMatrices, plan: PartitionPlan | None, cfg: SimConfig,
                  sensing: str = "neuron") -> CircuitGraph:
    """Concatenate all layer crossbars into one network.

    Layer j's neuron outputs drive layer j+1's rows; the first layer's rows
    are driven by one voltage source per input feature.
    """
    weights.check_topology(cfg.topology)
    if plan is None:
        plan = plan_from_config(cfg)
    if len(plan) != cfg.topology.n_layers:
        raise DimensionMismatch("partition plan does not match topology")
    if sensing == "virtual_ground" and cfg.topology.n_layers != 1:
        raise ValidationError("virtual-ground sensing is only defined for single-layer networks")

    g = CircuitGraph()
    vdd = g.add_node("vdd", "rail")
    g.add_source("Vdd", vdd, 0, cfg.vdd, "rail")
    n_in = cfg.topology.n_inputs
    ins = g.add_nodes([f"in{i}" for i in range(n_in)], "input")
    g.inputs = [g.add_source(f"Vin{i}", ins[i], 0, 0.0, "input") for i in range(n_in)]

    drive = ins
    for j in range(cfg.topology.n_layers):
        scale = weights.layer_scale(j)
        info = build_layer(g, j + 1, weights.weights[j], weights.biases[j], plan[j], cfg, drive,
                           sensing=sensing, w_max=scale)
        drive = info.outputs

    last = g.layers[-1]
    if sensing == "neuron":
        g.outputs = list(last.outputs)
        g.output_kind = "voltage"
    else:
        g.outputs = [i for i, s in enumerate(g.sources) if s.kind == "sense"]
        g.output_kind = "current"
    g.freeze()
    g.meta.update(
        topology=list(cfg.topology.layer_sizes),
        horizontal=list(plan.horizontal),
        vertical=list(plan.vertical),
        parasitics=cfg.parasitics_enabled,
        sensing=sensing,
        counts=g.counts(),
        vdd=cfg.vdd,
        vss=cfg.vss,
    )
    return g


def expected_counts(topology, parasitics: bool, cap_model: str = "L",
                    neuron_caps: bool = False) -> dict[str, int]:
    """Closed-form element counts; independent of the partition plan."""
    sizes = topology.layer_sizes if hasattr(topology, "layer_sizes") else tuple(topology)
    cells = sum((sizes[j] + 1) * sizes[j + 1] for j in range(len(sizes) - 1))
    neurons = sum(sizes[1:])
    caps = (3 * cells * (2 if cap_model == "pi" else 1)) if parasitics else 0
    return {
        "synapses": 2 * cells,
        "wire_segments": 3 * cells if parasitics else 0,
        "capacitors": caps + (neurons if neuron_caps else 0),
        "neurons": neurons,
        "sources": 1 + sizes[0],
        "nodes": 1 + 1 + sizes[0] + 2 * neurons + neurons + (3 * cells if parasitics else 0),
    }


# --------------------------------------------------------------------------
# process variation

def variation_factors(n: int, sigma: float, seed) -> np.ndarray:
    """Lognormal multiplicative factors with median 1."""
    if sigma < 0:
        raise ValidationError("must be >= 0", "device.variation_sigma")
    if sigma == 0:
        return np.ones(n)
    rng = np.random.default_rng(seed)
    return np.exp(sigma * rng.standard_normal(n))


def apply_variation(graph: CircuitGraph, device: DeviceTech | float, seed) -> CircuitGraph:
    """Return a copy of ``graph`` with every memristor conductance perturbed.

    Access-device resistance in series with the memristor is left untouched.
    """
    sigma = device.variation_sigma if isinstance(device, DeviceTech) else float(device)
    out = graph.copy()
    if sigma == 0:
        return out
    mask = out.synapse_mask
    factors = variation_factors(int(mask.sum()), sigma, seed)
    dev = out.res_device[mask] / factors
    out.res_device = out.res_device.copy()
    out.res_ohms = out.res_ohms.copy()
    out.res_device[mask] = dev
    out.res_ohms[mask] = dev + out.res_access[mask]
    out._r[2], out._r[4] = [out.res_ohms], [out.res_device]
    return out
