"""Modified nodal analysis, DC operating point and backward-Euler transient.

Unknowns are ordered: graph nodes 1..N-1, one internal drive node per
neuron, then one branch current per voltage source (independent sources
first, neuron drives after).  Everything except the neuron transfer is
linear, so the Jacobian is

    J = A - E diag(f'(u)) C^T

with ``A`` constant, ``E`` selecting the neuron drive rows and ``C`` the
differential control voltages.  ``A`` is factorised once per solver (and
per time step size) and every Newton step is solved through the
Sherman-Morrison-Woodbury identity with a k x k dense system, k being the
neuron count.  Graphs with too many neurons fall back to a sparse LU of the
full Jacobian per iteration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .circuit import G_OPEN, CircuitGraph
from .config import NeuronKind, NeuronModel
from .exceptions import FloatingNode, NonConvergence, SingularMatrix, StepNonConvergence

log = logging.getLogger(__name__)

V_TOL = 1e-9
I_TOL = 1e-10
MAX_ITER = 100
MAX_HALVINGS = 20
# dense n x k workspace limit for the Woodbury path (doubles)
WOODBURY_LIMIT = 2e7

_KIND_CODE = {NeuronKind.SIGMOID: 0, NeuronKind.TANH: 1, NeuronKind.RELU: 2}


# --------------------------------------------------------------------------
# neuron transfer

def _transfer(v_in, kind, gain, v_high, v_low):
    v_in = np.asarray(v_in, dtype=float)
    swing = v_high - v_low
    mid = 0.5 * (v_high + v_low)
    x = v_in - mid
    sig_arg = 4.0 * gain * x / swing
    # logistic written via tanh to stay finite for large |arg|
    sig = 0.5 * (1.0 + np.tanh(0.5 * sig_arg))
    out_sig = v_low + swing * sig
    d_sig = gain * 4.0 * sig * (1.0 - sig)
    th = np.tanh(2.0 * gain * x / swing)
    out_tanh = mid + 0.5 * swing * th
    d_tanh = gain * (1.0 - th * th)
    lin = mid + gain * x
    out_relu = np.clip(lin, mid, v_high)
    d_relu = np.where((x >= 0) & (lin < v_high), gain, 0.0)
    out = np.where(kind == 0, out_sig, np.where(kind == 1, out_tanh, out_relu))
    der = np.where(kind == 0, d_sig, np.where(kind == 1, d_tanh, d_relu))
    return out, der


def neuron_transfer(v_in, model: NeuronModel):
    """Output voltage and slope dv_out/dv_in of a behavioural neuron.

    Sigmoid maps the input around the rail midpoint onto [v_low, v_high]
    with slope ``gain`` at the midpoint.  With rail-normalised scaling the
    tanh variant traces the same curve; ReLU is linear above the midpoint
    and clamps at the midpoint and at v_high.
    """
    out, der = _transfer(v_in, _KIND_CODE[model.kind], model.gain, model.v_high, model.v_low)
    if np.ndim(v_in) == 0:
        return float(out), float(der)
    return out, der


# --------------------------------------------------------------------------
# stamping

@dataclass
class MnaSystem:
    A: sp.csc_matrix              # linear part (neuron drives as 0 V sources)
    Cmat: sp.csc_matrix           # capacitance stamps
    n_nodes: int                  # node unknowns (graph nodes - 1 + drive nodes)
    n_graph_nodes: int
    source_rows: np.ndarray       # branch row of each graph source
    neuron_rows: np.ndarray       # branch row of each neuron drive
    drive_idx: np.ndarray         # unknown index of each neuron drive node
    ctrl_pos: np.ndarray          # unknown index, -1 for ground
    ctrl_neg: np.ndarray
    b0: np.ndarray                # right-hand side with sources at their DC values
    kind: np.ndarray
    gain: np.ndarray
    v_high: np.ndarray
    v_low: np.ndarray
    gmin: float = G_OPEN
    extra_r: dict = field(default_factory=dict)   # neuron-internal resistors

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.neuron_rows.size

    @property
    def v_mid(self) -> np.ndarray:
        return 0.5 * (self.v_high + self.v_low)

    def control(self, x: np.ndarray) -> np.ndarray:
        xe = np.append(x, 0.0)
        return self.v_mid + xe[self.ctrl_pos] - xe[self.ctrl_neg]

    def transfer(self, u):
        return _transfer(u, self.kind, self.gain, self.v_high, self.v_low)

    def dump(self, path):
        """Write ``A`` as 'row col value' triplets (0-based, header line first)."""
        coo = self.A.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# mna {self.size} {self.size} {coo.nnz} nodes={self.n_nodes}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v!r}\n")


def _conductance_coo(i, j, g):
    """COO triplets of two-terminal conductances; index -1 is ground."""
    keep_i, keep_j = i >= 0, j >= 0
    both = keep_i & keep_j
    rows = np.concatenate([i[keep_i], j[keep_j], i[both], j[both]])
    cols = np.concatenate([i[keep_i], j[keep_j], j[both], i[both]])
    vals = np.concatenate([g[keep_i], g[keep_j], -g[both], -g[both]])
    return rows, cols, vals


def check_connectivity(graph: CircuitGraph):
    """Raise :class:`FloatingNode` if a node has no DC path to ground."""
    n = graph.n_nodes
    a = [graph.res_n1, np.array([s.n_plus for s in graph.sources], dtype=np.int64)]
    b = [graph.res_n2, np.array([s.n_minus for s in graph.sources], dtype=np.int64)]
    for nrn in graph.neurons:
        # sense resistors tie inputs to ground, the drive source ties the output
        a.append(np.array([nrn.in_pos, nrn.in_neg, nrn.out]))
        b.append(np.zeros(3, dtype=np.int64))
    a, b = np.concatenate(a), np.concatenate(b)
    adj = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    floating = np.flatnonzero(labels != labels[0])
    if floating.size:
        name = graph.node_names[floating[0]]
        raise FloatingNode(f"node {name!r} has no DC path to ground "
                           f"({floating.size} floating nodes)", node=name)


def stamp(graph: CircuitGraph, gmin: float = G_OPEN) -> MnaSystem:
    """Assemble the MNA system; node ordering follows the graph."""
    check_connectivity(graph)
    n_g = graph.n_nodes
    k = len(graph.neurons)
    n_src = len(graph.sources)
    n_nodes = n_g - 1 + k
    drive_idx = np.arange(n_g - 1, n_nodes)
    source_rows = np.arange(n_nodes, n_nodes + n_src)
    neuron_rows = np.arange(n_nodes + n_src, n_nodes + n_src + k)
    size = n_nodes + n_src + k

    ri, rj, rv = [], [], []
    # graph resistors
    rows, cols, vals = _conductance_coo(graph.res_n1 - 1, graph.res_n2 - 1, 1.0 / graph.res_ohms)
    ri.append(rows), rj.append(cols), rv.append(vals)

    # neuron-internal resistors: two sense resistors and the output resistor
    if k:
        pos = np.array([n.in_pos for n in graph.neurons]) - 1
        neg = np.array([n.in_neg for n in graph.neurons]) - 1
        out = np.array([n.out for n in graph.neurons]) - 1
        r_in = np.array([n.model.input_resistance for n in graph.neurons])
        r_out = np.array([n.model.output_resistance for n in graph.neurons])
        gnd = np.full(k, -1)
        extra = {
            "n1": np.concatenate([pos, neg, drive_idx]),
            "n2": np.concatenate([gnd, gnd, out]),
            "ohms": np.concatenate([r_in, r_in, r_out]),
        }
        rows, cols, vals = _conductance_coo(extra["n1"], extra["n2"], 1.0 / extra["ohms"])
        ri.append(rows), rj.append(cols), rv.append(vals)
        models = [n.model for n in graph.neurons]
        kind = np.array([_KIND_CODE[m.kind] for m in models])
        gain = np.array([m.gain for m in models])
        v_high = np.array([m.v_high for m in models])
        v_low = np.array([m.v_low for m in models])
    else:
        pos = neg = out = np.zeros(0, dtype=np.int64)
        extra = {"n1": pos, "n2": pos, "ohms": np.zeros(0)}
        kind = gain = v_high = v_low = np.zeros(0)

    # gmin shunts on every node unknown
    diag = np.arange(n_nodes)
    ri.append(diag), rj.append(diag), rv.append(np.full(n_nodes, gmin))

    # voltage source incidence
    sp_idx = np.array([s.n_plus for s in graph.sources], dtype=np.int64) - 1
    sn_idx = np.array([s.n_minus for s in graph.sources], dtype=np.int64) - 1
    for terminal, sign in ((sp_idx, 1.0), (sn_idx, -1.0)):
        m = terminal >= 0
        ri += [terminal[m], source_rows[m]]
        rj += [source_rows[m], terminal[m]]
        rv += [np.full(m.sum(), sign), np.full(m.sum(), sign)]
    ri += [drive_idx, neuron_rows]
    rj += [neuron_rows, drive_idx]
    rv += [np.ones(k), np.ones(k)]

    A = sp.coo_matrix((np.concatenate(rv), (np.concatenate(ri), np.concatenate(rj))),
                      shape=(size, size)).tocsc()
    A.sum_duplicates()

    ci, cj, cv = _conductance_coo(graph.cap_n1 - 1, graph.cap_n2 - 1, graph.cap_farads)
    Cmat = sp.coo_matrix((cv, (ci, cj)), shape=(size, size)).tocsc()
    Cmat.sum_duplicates()

    b0 = np.zeros(size)
    b0[source_rows] = [s.dc for s in graph.sources]
    return MnaSystem(A, Cmat, n_nodes, n_g, source_rows, neuron_rows, drive_idx, pos, neg,
                     b0, kind, gain, v_high, v_low, gmin, extra)


# --------------------------------------------------------------------------
# factorisation

class _Factor:
    """LU of a fixed matrix plus the Woodbury workspace for the neuron update."""

    def __init__(self, A: sp.csc_matrix, mna: MnaSystem, method: str):
        self.A = A
        self.mna = mna
        try:
            self.lu = splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularMatrix(f"MNA matrix is singular: {exc}") from None
        k = mna.n_neurons
        if method == "auto":
            method = "woodbury" if A.shape[0] * k <= WOODBURY_LIMIT else "direct"
        self.method = method if k else "woodbury"
        if k and self.method == "woodbury":
            E = np.zeros((A.shape[0], k))
            E[mna.neuron_rows, np.arange(k)] = 1.0
            self.Z = self.lu.solve(E)
            self.M = self._ctrl(self.Z)
            self._eye = np.eye(k)

    def _ctrl(self, y):
        ye = np.concatenate([y, np.zeros((1,) + y.shape[1:])])
        return ye[self.mna.ctrl_pos] - ye[self.mna.ctrl_neg]

    def solve(self, rhs, slopes):
        """Solve (A - E diag(slopes) C^T) x = rhs."""
        mna = self.mna
        if not mna.n_neurons:
            return self.lu.solve(rhs)
        if self.method == "woodbury":
            y = self.lu.solve(rhs)
            s = np.linalg.solve(self._eye - self.M * slopes[None, :], self._ctrl(y))
            return y + self.Z @ (slopes * s)
        k = mna.n_neurons
        rows = np.concatenate([mna.neuron_rows, mna.neuron_rows])
        cols = np.concatenate([mna.ctrl_pos, mna.ctrl_neg])
        vals = np.concatenate([-slopes, slopes])
        keep = cols >= 0
        upd = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=self.A.shape)
        try:
            return splu((self.A + upd).tocsc(), permc_spec="COLAMD").solve(rhs)
        except RuntimeError as exc:
            raise SingularMatrix(f"Jacobian is singular ({k} neurons): {exc}") from None


# --------------------------------------------------------------------------
# results

@dataclass
class SolveResult:
    node_voltages: np.ndarray     # per graph node, ground included
    source_currents: np.ndarray   # delivered by each graph source (out of + terminal)
    neuron_currents: np.ndarray   # delivered by each neuron drive
    total_power: float
    dissipated_power: float
    newton_iterations: int
    converged: bool
    max_kcl_residual: float
    x: np.ndarray = field(repr=False, default=None)
    output_kind: str = "voltage"
    outputs: np.ndarray = field(default=None)

    def voltage(self, graph: CircuitGraph, name: str) -> float:
        return float(self.node_voltages[graph.node(name)])

    @property
    def energy_balance_error(self) -> float:
        denom = max(abs(self.total_power), 1e-300)
        return abs(self.total_power - self.dissipated_power) / denom


@dataclass
class TransientResult:
    sample_times: np.ndarray      # end of every sampling interval
    outputs: np.ndarray           # (intervals, outputs) sampled at interval ends
    dc_targets: np.ndarray        # DC solution at each interval's final inputs
    settling_time: np.ndarray     # (intervals, outputs), inf if not settled
    latency: float
    interval_energy: np.ndarray
    interval_power: np.ndarray
    settle_band: float
    newton_iterations: int
    times: np.ndarray | None = None
    waveforms: np.ndarray | None = None


# --------------------------------------------------------------------------
# solver

class CircuitSolver:
    """Reusable solver for one circuit graph.

    The linear part is factorised lazily and kept for every subsequent DC
    solve and, per step size, for transient runs.  Instances own their
    workspace and are not thread-safe; use one per worker.
    """

    def __init__(self, graph: CircuitGraph, gmin: float = G_OPEN, method: str = "auto",
                 v_tol: float = V_TOL, i_tol: float = I_TOL, max_iter: int = MAX_ITER):
        self.graph = graph
        self.mna = stamp(graph, gmin)
        self.method = method
        self.v_tol, self.i_tol, self.max_iter = v_tol, i_tol, max_iter
        self._factors: dict = {}
        src = graph.sources
        self._src_n_plus = np.array([s.n_plus for s in src], dtype=np.int64)
        self._src_n_minus = np.array([s.n_minus for s in src], dtype=np.int64)
        self._input_rows = self.mna.source_rows[np.asarray(graph.inputs, dtype=np.int64)]

    # -- helpers ------------------------------------------------------------
    def _factor(self, dt=None) -> _Factor:
        key = dt
        if key not in self._factors:
            A = self.mna.A if dt is None else (self.mna.A + self.mna.Cmat / dt).tocsc()
            self._factors[key] = _Factor(A, self.mna, self.method)
        return self._factors[key]

    def rhs(self, input_voltages=None, source_values=None) -> np.ndarray:
        b = self.mna.b0.copy()
        if input_voltages is not None:
            v = np.asarray(input_voltages, dtype=float).reshape(-1)
            if v.size != self._input_rows.size:
                raise ValueError(f"expected {self._input_rows.size} input voltages, got {v.size}")
            b[self._input_rows] = v
        if source_values:
            for key, val in source_values.items():
                idx = key if isinstance(key, (int, np.integer)) else self._source_index(key)
                b[self.mna.source_rows[idx]] = val
        return b

    def _source_index(self, name):
        for i, s in enumerate(self.graph.sources):
            if s.name == name:
                return i
        raise KeyError(name)

    def _newton(self, factor: _Factor, b: np.ndarray, x0: np.ndarray, hist=None):
        """Damped Newton on A x + hist - b - E f(u) = 0 where hist is the companion term."""
        mna = self.mna
        A = factor.A
        n_nodes = mna.n_nodes
        x = x0.copy()

        def residual(x):
            f, d = mna.transfer(mna.control(x)) if mna.n_neurons else (None, None)
            F = A @ x - b
            if hist is not None:
                F -= hist
            if f is not None:
                F[mna.neuron_rows] -= f
            return F, d

        F, d = residual(x)
        norm = np.linalg.norm(F)
        converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            slopes = d if d is not None else np.zeros(0)
            delta = factor.solve(-F, slopes)
            size = np.linalg.norm(delta)
            lam = 1.0
            # natural monotonicity test: the simplified Newton correction at the
            # trial point must shrink; unlike ||F|| it does not mix amps and volts
            for _ in range(MAX_HALVINGS + 1):
                x_new = x + lam * delta
                F_new, d_new = residual(x_new)
                norm_new = np.linalg.norm(F_new)
                if np.isfinite(norm_new):
                    trial = np.linalg.norm(factor.solve(-F_new, slopes))
                    if trial <= (1.0 - 0.25 * lam) * size or norm_new <= norm:
                        break
                lam *= 0.5
            step = lam * np.max(np.abs(delta), initial=0.0)
            x, F, d, norm = x_new, F_new, d_new, norm_new
            kcl = np.max(np.abs(F[:n_nodes]), initial=0.0)
            branch = np.max(np.abs(F[n_nodes:]), initial=0.0)
            if step < self.v_tol and kcl < self.i_tol and branch < self.v_tol:
                converged = True
                break
        kcl = float(np.max(np.abs(F[:n_nodes]), initial=0.0))
        return x, it, converged, kcl

    def _result(self, x, iterations, converged, kcl) -> SolveResult:
        mna, g = self.mna, self.graph
        v = np.concatenate([[0.0], x[: mna.n_graph_nodes - 1]])
        i_branch = x[mna.source_rows]
        delivered = -i_branch
        v_src = v[self._src_n_plus] - v[self._src_n_minus]
        i_neuron = -x[mna.neuron_rows]
        v_drive = x[mna.drive_idx]
        total = float(v_src @ delivered + v_drive @ i_neuron)
        dissipated = self._dissipation(x)
        if g.output_kind == "voltage":
            outputs = v[np.asarray(g.outputs, dtype=np.int64)]
        else:
            outputs = i_branch[np.asarray(g.outputs, dtype=np.int64)]
        return SolveResult(v, delivered, i_neuron, total, dissipated, iterations, converged,
                           kcl, x, g.output_kind, outputs)

    def _dissipation(self, x) -> float:
        g, mna = self.graph, self.mna
        xe = np.append(x, 0.0)
        dv = xe[g.res_n1 - 1] - xe[g.res_n2 - 1]
        p = float(np.sum(dv * dv / g.res_ohms))
        ex = mna.extra_r
        if ex["ohms"].size:
            dv = xe[ex["n1"]] - xe[ex["n2"]]
            p += float(np.sum(dv * dv / ex["ohms"]))
        nodes = x[: mna.n_nodes]
        return p + mna.gmin * float(nodes @ nodes)

    def _delivered_power(self, x) -> float:
        mna = self.mna
        v = np.concatenate([[0.0], x[: mna.n_graph_nodes - 1]])
        v_src = v[self._src_n_plus] - v[self._src_n_minus]
        return float(-(v_src @ x[mna.source_rows]) - x[mna.drive_idx] @ x[mna.neuron_rows])

    def _outputs(self, x) -> np.ndarray:
        g = self.graph
        idx = np.asarray(g.outputs, dtype=np.int64)
        if g.output_kind == "voltage":
            xe = np.append(x, 0.0)
            return xe[idx - 1]
        return x[self.mna.source_rows[idx]]

    # -- analyses -----------------------------------------------------------
    def solve_dc(self, input_voltages=None, x0=None, source_values=None,
                 raise_on_failure: bool = False) -> SolveResult:
        """DC operating point for the given input source voltages."""
        factor = self._factor()
        b = self.rhs(input_voltages, source_values)
        x0 = np.zeros(self.mna.size) if x0 is None else np.asarray(x0, dtype=float)
        x, it, ok, kcl = self._newton(factor, b, x0)
        res = self._result(x, it, ok, kcl)
        if not ok:
            log.warning("DC solve did not converge after %d iterations (kcl=%.3g A)", it, kcl)
            if raise_on_failure:
                raise NonConvergence(f"no convergence after {it} Newton iterations", result=res)
        return res

    def solve_transient(self, waveforms, t_end: float, dt: float, t_sampling: float | None = None,
                        settle_band: float | None = None, record: bool = False,
                        settle_fraction: float = 0.02) -> TransientResult:
        """Backward-Euler transient with piecewise-linear sources.

        ``waveforms`` maps source names (or source indices) to ``(times, values)``
        breakpoints; unlisted sources keep their DC value.  Outputs are
        sampled at every multiple of ``t_sampling`` (default: ``t_end``).
        """
        if not dt > 0 or not t_end > 0:
            raise ValueError("dt and t_end must be positive")
        t_sampling = t_end if t_sampling is None else t_sampling
        n_steps = int(round(t_end / dt))
        per_interval = t_sampling / dt
        if abs(per_interval - round(per_interval)) > 1e-6 * per_interval:
            raise ValueError("t_sampling must be a whole number of time steps")
        per_interval = int(round(per_interval))
        n_intervals = n_steps // per_interval
        mna = self.mna

        rows, tps, vps = [], [], []
        for key, (tp, vp) in waveforms.items():
            idx = key if isinstance(key, (int, np.integer)) else self._source_index(key)
            rows.append(mna.source_rows[idx])
            tps.append(np.asarray(tp, dtype=float))
            vps.append(np.asarray(vp, dtype=float))
        rows = np.asarray(rows, dtype=np.int64)

        def rhs_at(t):
            b = mna.b0.copy()
            for r, tp, vp in zip(rows, tps, vps):
                b[r] = np.interp(t, tp, vp)
            return b

        # initial operating point and per-interval DC targets
        dc = self._factor()
        x, it0, ok, _ = self._newton(dc, rhs_at(0.0), np.zeros(mna.size))
        if not ok:
            raise StepNonConvergence("initial operating point did not converge", time=0.0)
        targets = []
        xt = x
        for k in range(1, n_intervals + 1):
            xt, _, ok_t, _ = self._newton(dc, rhs_at(k * t_sampling), xt)
            targets.append(self._outputs(xt))
        targets = np.array(targets).reshape(n_intervals, -1)

        fac = self._factor(dt)
        cdt = mna.Cmat / dt
        n_out = len(self.graph.outputs)
        wave = np.empty((n_steps + 1, n_out))
        wave[0] = self._outputs(x)
        power = np.empty(n_steps + 1)
        power[0] = self._delivered_power(x)
        iters = it0
        for n in range(1, n_steps + 1):
            t = n * dt
            x, it, ok, kcl = self._newton(fac, rhs_at(t), x, hist=cdt @ x)
            iters += it
            if not ok:
                raise StepNonConvergence(f"time step at t={t:.4g}s did not converge", time=t)
            wave[n] = self._outputs(x)
            power[n] = self._delivered_power(x)

        if settle_band is None:
            if self.graph.neurons:
                settle_band = settle_fraction * self.graph.neurons[-1].model.swing
            else:
                settle_band = settle_fraction * max(np.max(np.abs(targets), initial=0.0), 1e-30)
        ends = np.arange(1, n_intervals + 1) * per_interval
        settling = np.zeros((n_intervals, n_out))
        energy = np.zeros(n_intervals)
        for k in range(n_intervals):
            lo, hi = ends[k] - per_interval, ends[k]
            seg = wave[lo + 1: hi + 1]
            energy[k] = power[lo + 1: hi + 1].sum() * dt
            bad = np.abs(seg - targets[k]) > settle_band
            for o in range(n_out):
                viol = np.flatnonzero(bad[:, o])
                if viol.size == 0:
                    settling[k, o] = 0.0
                elif viol[-1] == seg.shape[0] - 1:
                    settling[k, o] = np.inf
                else:
                    settling[k, o] = (viol[-1] + 1) * dt
        latency = float(settling.max(initial=0.0))
        return TransientResult(
            sample_times=ends * dt,
            outputs=wave[ends],
            dc_targets=targets,
            settling_time=settling,
            latency=latency,
            interval_energy=energy,
            interval_power=energy / t_sampling,
            settle_band=float(settle_band),
            newton_iterations=iters,
            times=np.arange(n_steps + 1) * dt if record else None,
            waveforms=wave if record else None,
        )


def solve_dc(graph: CircuitGraph, input_voltages=None, **kwargs) -> SolveResult:
    return CircuitSolver(graph).solve_dc(input_voltages, **kwargs)


def solve_transient(graph: CircuitGraph, pwl_inputs, t_end: float, dt: float,
                    **kwargs) -> TransientResult:
    return CircuitSolver(graph).solve_transient(pwl_inputs, t_end, dt, **kwargs)
