"""SPICE netlist export and a small parser for the exported subset.

Card grammar written by :func:`export_spice`::

    * comment
    .include 'neuron.sp'
    .subckt layer<L> <port> ...          one subcircuit per layer
    R<i> <n1> <n2> <ohms>
    C<i> <n1> <n2> <farads>
    V<name> <n+> <n-> DC <volts>
    X<name> <in+> <in-> <out> neuron_<kind> gain=<g> vhigh=<v> vlow=<v> rin=<r> rout=<r>
    .ends
    Xlayer<L> <port> ... layer<L>        top-level instance
    .op
    .end

Values are written with full float precision.  Node ``0`` is the global
ground.  Nodes local to one layer stay inside its subcircuit; nodes shared
between layers or with the top level are ports.  The neuron subcircuits live
in ``neuron.sp`` (see :func:`write_neuron_stub`) and are treated as leaf
elements by the parser.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .circuit import CircuitGraph
from .exceptions import FormatError

_LAYER_RE = re.compile(r"^l(\d+)_")
_SUFFIX = {"t": 1e12, "g": 1e9, "meg": 1e6, "k": 1e3, "m": 1e-3, "u": 1e-6, "n": 1e-9,
           "p": 1e-12, "f": 1e-15}
_NUM_RE = re.compile(r"^([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)(meg|[tgkmunpf])?[a-z]*$",
                     re.IGNORECASE)

NEURON_STUB = """\
* Behavioural neuron subcircuits used by crossbar_sim netlists.
* in+ / in- are the two column sense nodes, out drives the next layer.
* The transfer is centred where v(in+) - v(in-) equals the rail midpoint.
.subckt neuron_sigmoid inp inn out gain=5 vhigh=0.8 vlow=-0.8 rin=10k rout=100
Rinp inp 0 {rin}
Rinn inn 0 {rin}
Bdrv drv 0 V={vlow + (vhigh-vlow)/(1+exp(-4*gain*(v(inp)-v(inn)-(vhigh+vlow)/2)/(vhigh-vlow)))}
Rout drv out {rout}
.ends
.subckt neuron_tanh inp inn out gain=5 vhigh=0.8 vlow=-0.8 rin=10k rout=100
Rinp inp 0 {rin}
Rinn inn 0 {rin}
Bdrv drv 0 V={(vhigh+vlow)/2 + (vhigh-vlow)/2*tanh(2*gain*(v(inp)-v(inn)-(vhigh+vlow)/2)/(vhigh-vlow))}
Rout drv out {rout}
.ends
.subckt neuron_relu inp inn out gain=5 vhigh=0.8 vlow=-0.8 rin=10k rout=100
Rinp inp 0 {rin}
Rinn inn 0 {rin}
Bdrv drv 0 V={min(vhigh, max((vhigh+vlow)/2, (vhigh+vlow)/2 + gain*(v(inp)-v(inn)-(vhigh+vlow)/2)))}
Rout drv out {rout}
.ends
"""


def spice_number(text: str) -> float:
    """Parse a SPICE value with an optional scale suffix (``10k``, ``1.5meg``)."""
    m = _NUM_RE.match(text.strip())
    if not m:
        raise FormatError(f"not a SPICE number: {text!r}")
    base = float(m.group(1))
    suffix = (m.group(2) or "").lower()
    return base * _SUFFIX.get(suffix, 1.0)


def _layer_of(name: str) -> int:
    m = _LAYER_RE.match(name)
    return int(m.group(1)) if m else 0


def _element_cards(graph: CircuitGraph):
    """(layer, node names, card) for every element; layer 0 is the top level."""
    names = graph.node_names
    out = []
    for i, (a, b, r) in enumerate(zip(graph.res_n1, graph.res_n2, graph.res_ohms)):
        na, nb = names[a], names[b]
        out.append((max(_layer_of(na), _layer_of(nb)), (na, nb), f"R{i} {na} {nb} {float(r)!r}"))
    for i, (a, b, c) in enumerate(zip(graph.cap_n1, graph.cap_n2, graph.cap_farads)):
        na, nb = names[a], names[b]
        out.append((max(_layer_of(na), _layer_of(nb)), (na, nb), f"C{i} {na} {nb} {float(c)!r}"))
    for s in graph.sources:
        np_, nm = names[s.n_plus], names[s.n_minus]
        name = s.name if s.name.upper().startswith("V") else f"V{s.name}"
        out.append((max(_layer_of(np_), _layer_of(nm)), (np_, nm),
                    f"{name} {np_} {nm} DC {s.dc!r}"))
    for nrn in graph.neurons:
        m = nrn.model
        nodes = (names[nrn.in_pos], names[nrn.in_neg], names[nrn.out])
        name = nrn.name if nrn.name.upper().startswith("X") else f"X{nrn.name}"
        card = (f"{name} {' '.join(nodes)} neuron_{m.kind.value} gain={m.gain!r} "
                f"vhigh={m.v_high!r} vlow={m.v_low!r} rin={m.input_resistance!r} "
                f"rout={m.output_resistance!r}")
        out.append((max(_layer_of(n) for n in nodes), nodes, card))
    return out


def export_spice(graph: CircuitGraph, path, title: str = "crossbar_sim network",
                 neuron_file: str = "neuron.sp", write_stub: bool = False) -> dict:
    """Write ``graph`` as a hierarchical netlist; returns node/element counts.

    Raises :class:`OSError` when the file cannot be written.
    """
    path = Path(path)
    cards = _element_cards(graph)
    usage: dict[str, set] = {}
    for layer, nodes, _ in cards:
        for n in nodes:
            usage.setdefault(n, set()).add(layer)
    if graph.output_kind == "voltage":
        for n in graph.output_names():
            usage.setdefault(n, set()).add(0)     # keep network outputs visible at top level
    layers = sorted({c[0] for c in cards if c[0] > 0})
    counts = graph.counts()

    lines = [f"* {title}"]
    lines += [f"* {k}: {v}" for k, v in counts.items()]
    lines.append(f".include '{neuron_file}'")
    instances = []
    for L in layers:
        body = [c for c in cards if c[0] == L]
        used = []
        seen = set()
        for _, nodes, _ in body:
            for n in nodes:
                if n not in seen:
                    seen.add(n)
                    used.append(n)
        ports = [n for n in used if n != "0" and usage[n] != {L}]
        lines.append(f".subckt layer{L} {' '.join(ports)}")
        lines += [c[2] for c in body]
        lines.append(".ends")
        instances.append(f"Xlayer{L} {' '.join(ports)} layer{L}")
    lines += [c[2] for c in cards if c[0] == 0]
    lines += instances
    lines += [".op", ".end"]
    path.write_text("\n".join(lines) + "\n")
    if write_stub:
        (path.parent / neuron_file).write_text(NEURON_STUB)
    return counts


def write_neuron_stub(path):
    Path(path).write_text(NEURON_STUB)


# --------------------------------------------------------------------------
# parsing

@dataclass
class Netlist:
    resistors: list = field(default_factory=list)     # (n1, n2, ohms)
    capacitors: list = field(default_factory=list)    # (n1, n2, farads)
    sources: list = field(default_factory=list)       # (name, n+, n-, dc)
    neurons: list = field(default_factory=list)       # (name, (in+, in-, out), subckt, params)
    includes: list = field(default_factory=list)

    @property
    def nodes(self) -> set:
        out = {"0"}
        for a, b, _ in self.resistors + self.capacitors:
            out.update((a, b))
        for _, a, b, _ in self.sources:
            out.update((a, b))
        for _, nodes, _, _ in self.neurons:
            out.update(nodes)
        return out

    def counts(self) -> dict:
        return {"nodes": len(self.nodes), "resistors": len(self.resistors),
                "capacitors": len(self.capacitors), "sources": len(self.sources),
                "neurons": len(self.neurons)}

    def multiset(self, strip_hierarchy: bool = True) -> Counter:
        """Element multiset in the format of :func:`crossbar_sim.circuit.element_multiset`."""
        fix = _strip if strip_hierarchy else (lambda n: n)
        items = Counter()
        for a, b, r in self.resistors:
            items[("R", tuple(sorted((fix(a), fix(b)))), r)] += 1
        for a, b, c in self.capacitors:
            items[("C", tuple(sorted((fix(a), fix(b)))), c)] += 1
        for _, a, b, v in self.sources:
            items[("V", (fix(a), fix(b)), v)] += 1
        for _, nodes, sub, p in self.neurons:
            kind = sub[len("neuron_"):] if sub.startswith("neuron_") else sub
            items[("X", tuple(fix(n) for n in nodes),
                   (kind, p["gain"], p["vhigh"], p["vlow"], p["rin"], p["rout"]))] += 1
        return items


def _strip(node: str) -> str:
    return node.rsplit(".", 1)[-1]


def _logical_lines(text: str):
    out = []
    for raw in text.splitlines():
        line = raw.split(";", 1)[0].rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        if line.startswith("+"):
            if not out:
                raise FormatError("continuation line without a card")
            out[-1] += " " + line[1:].strip()
        else:
            out.append(line.strip())
    return out


def parse_spice(path) -> Netlist:
    """Parse and flatten a netlist in the exported subset.

    Instances of subcircuits defined in the file are expanded with internal
    nodes renamed ``<instance>.<node>``; instances of undefined subcircuits
    (the neurons) are kept as leaf elements.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from None
    lines = _logical_lines(text)
    subckts: dict[str, tuple[list, list]] = {}
    top: list[str] = []
    includes = []
    current = None
    for line in lines:
        tok = line.split()
        head = tok[0].lower()
        if head == ".subckt":
            if current is not None:
                raise FormatError("nested .subckt definitions are not supported")
            current = tok[1]
            subckts[current] = ([t for t in tok[2:] if "=" not in t], [])
        elif head == ".ends":
            if current is None:
                raise FormatError(".ends without .subckt")
            current = None
        elif head == ".include":
            includes.append(tok[1].strip("'\""))
        elif head in (".end", ".op", ".tran", ".param", ".option", ".options", ".title"):
            continue
        elif head.startswith("."):
            raise FormatError(f"unsupported control card {tok[0]}")
        elif current is not None:
            subckts[current][1].append(line)
        else:
            top.append(line)
    if current is not None:
        raise FormatError(f"subcircuit {current} is not closed")

    net = Netlist(includes=includes)

    def expand(cards, mapping, prefix, depth):
        if depth > 20:
            raise FormatError("subcircuit recursion too deep")

        def node(n):
            if n == "0" or n.lower() == "gnd":
                return "0"
            if n in mapping:
                return mapping[n]
            return prefix + n

        for card in cards:
            tok = card.split()
            kind = tok[0][0].upper()
            try:
                if kind == "R":
                    net.resistors.append((node(tok[1]), node(tok[2]), spice_number(tok[3])))
                elif kind == "C":
                    net.capacitors.append((node(tok[1]), node(tok[2]), spice_number(tok[3])))
                elif kind == "V":
                    vals = [t for t in tok[3:] if t.upper() != "DC"]
                    dc = spice_number(vals[0]) if vals else 0.0
                    net.sources.append((tok[0], node(tok[1]), node(tok[2]), dc))
                elif kind == "X":
                    args = [t for t in tok[1:] if "=" not in t]
                    params = dict(t.split("=", 1) for t in tok[1:] if "=" in t)
                    sub = args[-1]
                    pins = [node(n) for n in args[:-1]]
                    if sub in subckts:
                        ports, body = subckts[sub]
                        if len(ports) != len(pins):
                            raise FormatError(f"{tok[0]}: {len(pins)} pins for {len(ports)} ports")
                        expand(body, dict(zip(ports, pins)), f"{prefix}{tok[0].lower()}.",
                               depth + 1)
                    else:
                        net.neurons.append((tok[0], tuple(pins), sub,
                                            {k.lower(): spice_number(v) for k, v in params.items()}))
                else:
                    raise FormatError(f"unsupported element card {tok[0]}")
            except (IndexError, ValueError):
                raise FormatError(f"malformed card: {card}") from None

    expand(top, {}, "", 0)
    return net
