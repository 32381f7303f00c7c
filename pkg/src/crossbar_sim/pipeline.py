"""End-to-end evaluation: encode inputs, solve the circuit, classify, aggregate.

Samples are processed in fixed chunks of ``batch_size``.  Each chunk starts
cold and warm-starts sample to sample inside the chunk, so the numbers a
sample receives depend only on the chunk it belongs to, never on which
worker ran it.  Reports from 1 and N workers are therefore byte-identical.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .circuit import CircuitGraph, WeightMatrices, apply_variation, build_network
from .config import SCHEMA, SimConfig, with_overrides
from .data import Dataset, encode_input
from .exceptions import (ConfigError, CrossbarSimError, DeviceError, EmptyRun, SolverError,
                         StepNonConvergence, UnknownKey, ValidationError)
from .partition import plan_from_config
from .solver import CircuitSolver

log = logging.getLogger(__name__)

MODES = ("dc", "transient")
STATUS_OK = "ok"
STATUS_FAILED_BY_CONSTRUCTION = "failed-by-construction"
STATUS_ERROR = "error"


# --------------------------------------------------------------------------
# reports

@dataclass
class SampleRecord:
    index: int
    predicted: int
    actual: int
    power: float
    converged: bool
    latency: float | None = None
    iterations: int = 0


@dataclass
class EvalReport:
    error_rate: float
    average_power: float
    latency: float | None
    n_samples: int
    n_errors: int = 0
    n_nonconverged: int = 0
    mode: str = "dc"
    status: str = STATUS_OK
    message: str = ""
    records: list = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return 1.0 - self.error_rate

    def to_dict(self, records: bool = True) -> dict:
        d = asdict(self)
        if not records:
            d.pop("records")
        return d

    def to_json(self, records: bool = True) -> str:
        return json.dumps(self.to_dict(records), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["records"] = [SampleRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    @classmethod
    def failed(cls, n_samples: int, status: str, message: str, mode: str = "dc") -> "EvalReport":
        return cls(1.0, 0.0, None, n_samples, n_samples, 0, mode, status, message)


def aggregate(records: list[SampleRecord], mode: str) -> EvalReport:
    """Error and power accumulation over sample records."""
    n = len(records)
    if n == 0:
        raise EmptyRun("no samples to aggregate")
    errors = sum(1 for r in records if not r.converged or r.predicted != r.actual)
    power = math.fsum(r.power for r in records)
    latency = None
    if mode == "transient":
        latency = max(r.latency for r in records)
    return EvalReport(
        error_rate=errors / n,
        average_power=power / n,
        latency=latency,
        n_samples=n,
        n_errors=errors,
        n_nonconverged=sum(1 for r in records if not r.converged),
        mode=mode,
        records=records,
    )


# --------------------------------------------------------------------------
# batching and decoding

@dataclass
class PwlBatch:
    start: int
    stop: int
    times: np.ndarray          # breakpoints shared by every input
    voltages: np.ndarray       # (n_inputs, n_breakpoints)
    t_sampling: float

    @property
    def size(self) -> int:
        return self.stop - self.start

    @property
    def t_end(self) -> float:
        return self.size * self.t_sampling

    @property
    def sample_times(self) -> np.ndarray:
        return (np.arange(self.size) + 1) * self.t_sampling


def batch_bounds(n: int, batch_size: int) -> list[tuple[int, int]]:
    if batch_size < 1:
        raise ValidationError("must be >= 1", "sim.batch_size")
    return [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]


def pwl_waveform(voltages: np.ndarray, t_sampling: float, rise_time: float, v_rest: float):
    """Breakpoints holding row k of ``voltages`` on interval k.

    Every interval opens with a linear ramp of ``rise_time`` from the
    previous value (``v_rest`` before the first sample).
    """
    v = np.atleast_2d(np.asarray(voltages, dtype=float))
    n = v.shape[0]
    if not 0 < rise_time < t_sampling:
        raise ValidationError("rise time must lie inside the sampling interval", "sim.rise_fraction")
    k = np.arange(n)
    times = np.empty(2 * n + 1)
    times[0] = 0.0
    times[1::2] = k * t_sampling + rise_time
    times[2::2] = (k + 1) * t_sampling
    vals = np.empty((v.shape[1], 2 * n + 1))
    vals[:, 0] = v_rest
    vals[:, 1::2] = v.T
    vals[:, 2::2] = v.T
    return times, vals


def schedule_batches(dataset: Dataset | np.ndarray, batch_size: int, t_sampling: float = 1e-9,
                     cfg: SimConfig | None = None, rise_fraction: float = 0.01) -> list[PwlBatch]:
    """Concatenate encoded samples into one PWL waveform per batch.

    Batch k covers samples [k*B, min((k+1)*B, N)); sample i of a batch is
    held on [i*T, (i+1)*T] and read out at (i+1)*T.
    """
    if not t_sampling > 0:
        raise ValidationError("must be > 0", "sim.t_sampling")
    feats = dataset.samples if isinstance(dataset, Dataset) else np.atleast_2d(dataset)
    if cfg is not None:
        volts = encode_input(feats, cfg)
        rest = 0.5 * (cfg.vdd + cfg.vss)
    else:
        volts, rest = feats, 0.0
    out = []
    for start, stop in batch_bounds(len(feats), batch_size):
        times, vals = pwl_waveform(volts[start:stop], t_sampling, rise_fraction * t_sampling, rest)
        out.append(PwlBatch(start, stop, times, vals, t_sampling))
    return out


def classify(outputs) -> int | np.ndarray:
    """Index of the largest output; ties go to the lowest index."""
    out = np.asarray(outputs, dtype=float)
    if out.ndim == 1:
        return int(np.argmax(out))
    return np.argmax(out, axis=-1)


# --------------------------------------------------------------------------
# workers

_STATE: dict[str, Any] = {}


def _init_worker(graph, cfg, samples, labels, mode, method):
    _STATE.clear()
    _STATE.update(graph=graph, cfg=cfg, samples=samples, labels=labels, mode=mode,
                  method=method, solver=None)


def _solver() -> CircuitSolver:
    if _STATE["solver"] is None:
        _STATE["solver"] = CircuitSolver(_STATE["graph"], method=_STATE["method"])
    return _STATE["solver"]


def _noisy_inputs(cfg: SimConfig, feats: np.ndarray, start: int) -> np.ndarray:
    volts = encode_input(feats, cfg)
    if cfg.input_noise > 0:
        for i in range(volts.shape[0]):
            rng = np.random.default_rng([cfg.rng_seed, start + i])
            volts[i] += cfg.input_noise * rng.standard_normal(volts.shape[1])
    return volts


def _run_chunk(bounds: tuple[int, int]) -> list[SampleRecord]:
    start, stop = bounds
    cfg, samples, labels = _STATE["cfg"], _STATE["samples"], _STATE["labels"]
    volts = _noisy_inputs(cfg, samples[start:stop], start)
    solver = _solver()
    if _STATE["mode"] == "dc":
        return _dc_chunk(solver, volts, labels[start:stop], start)
    return _transient_chunk(solver, cfg, volts, labels[start:stop], start)


def _dc_chunk(solver, volts, labels, start) -> list[SampleRecord]:
    records = []
    x = None
    for i, (v, label) in enumerate(zip(volts, labels)):
        try:
            res = solver.solve_dc(v, x0=x)
        except SolverError as exc:
            log.warning("sample %d failed: %s", start + i, exc)
            records.append(SampleRecord(start + i, -1, int(label), 0.0, False))
            x = None
            continue
        records.append(SampleRecord(start + i, classify(res.outputs), int(label),
                                    float(res.total_power), bool(res.converged), None,
                                    int(res.newton_iterations)))
        x = res.x if res.converged else None
    return records


def _transient_chunk(solver, cfg, volts, labels, start) -> list[SampleRecord]:
    n = volts.shape[0]
    times, vals = pwl_waveform(volts, cfg.sampling_time, cfg.rise_fraction * cfg.sampling_time,
                               0.5 * (cfg.vdd + cfg.vss))
    waves = {src: (times, vals[k]) for k, src in enumerate(solver.graph.inputs)}
    try:
        tr = solver.solve_transient(waves, n * cfg.sampling_time, cfg.dt,
                                    t_sampling=cfg.sampling_time,
                                    settle_fraction=cfg.settle_fraction)
    except StepNonConvergence as exc:
        log.warning("batch at sample %d failed at t=%.3g s", start, exc.time)
        return [SampleRecord(start + i, -1, int(labels[i]), 0.0, False, math.inf)
                for i in range(n)]
    preds = classify(tr.outputs)
    lat = tr.settling_time.max(axis=1)
    iters = tr.newton_iterations
    return [SampleRecord(start + i, int(preds[i]), int(labels[i]), float(tr.interval_power[i]),
                         True, float(lat[i]), iters if i == 0 else 0)
            for i in range(n)]


# --------------------------------------------------------------------------
# evaluation

def build_graph(cfg: SimConfig, weights: WeightMatrices) -> CircuitGraph:
    """Network for ``cfg``, with device variation applied when configured."""
    graph = build_network(weights, plan_from_config(cfg), cfg)
    if cfg.device.variation_sigma > 0:
        graph = apply_variation(graph, cfg.device, cfg.rng_seed)
    return graph


def evaluate(cfg: SimConfig, weights: WeightMatrices, dataset: Dataset,
             n_samples: int | None = None, mode: str = "dc", workers: int = 1,
             graph: CircuitGraph | None = None, method: str = "auto",
             timings: dict | None = None) -> EvalReport:
    """Classify the first ``n_samples`` samples on the simulated circuit.

    ``error_rate`` is errors / n_samples and ``average_power`` the summed
    per-sample power over n_samples.  Non-converged samples count as errors.
    DC mode reports DC power and no latency; transient mode reports power
    averaged over each sample's interval and the worst settling time.
    """
    mode = mode.lower()
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}", "mode")
    n = len(dataset) if n_samples is None else int(n_samples)
    if n <= 0:
        raise EmptyRun("n_samples must be positive")
    if n > len(dataset):
        raise ValidationError(f"{n} samples requested, dataset has {len(dataset)}", "samples")
    dataset.check_topology(cfg.topology)
    timings = {} if timings is None else timings

    t0 = time.perf_counter()
    if graph is None:
        graph = build_graph(cfg, weights)
    t1 = time.perf_counter()
    timings["build"] = timings.get("build", 0.0) + t1 - t0

    samples, labels = dataset.samples[:n], dataset.labels[:n]
    chunks = batch_bounds(n, cfg.batch_size)
    args = (graph, cfg, samples, labels, mode, method)
    if workers <= 1 or len(chunks) == 1:
        _init_worker(*args)
        try:
            parts = [_run_chunk(c) for c in chunks]
        finally:
            _STATE.clear()
    else:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(min(workers, len(chunks)), mp_context=ctx,
                                 initializer=_init_worker, initargs=args) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    t2 = time.perf_counter()
    timings["solve"] = timings.get("solve", 0.0) + t2 - t1

    records = [r for part in parts for r in part]
    report = aggregate(records, mode)
    timings["aggregate"] = timings.get("aggregate", 0.0) + time.perf_counter() - t2
    return report


# --------------------------------------------------------------------------
# sweeps

@dataclass
class SweepPoint:
    overrides: dict
    report: EvalReport
    wall_time: float = 0.0


def grid_points(grid: dict[str, list]) -> list[dict]:
    for key in grid:
        if key not in SCHEMA:
            raise UnknownKey(key)
    if not grid:
        return [{}]
    keys = list(grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in grid.values()]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def sweep(base_cfg: SimConfig, grid: dict[str, list], weights: WeightMatrices, dataset: Dataset,
          n_samples: int | None = None, mode: str = "dc", workers: int = 1,
          method: str = "auto") -> list[SweepPoint]:
    """Evaluate the Cartesian product of ``grid`` on top of ``base_cfg``.

    Points whose device has r_high <= r_low cannot work as a binary memory and
    are reported as failed by construction with error rate 1.  Any other
    per-point failure is recorded and the sweep carries on.
    """
    points = grid_points(grid)
    n = len(dataset) if n_samples is None else int(n_samples)
    out = []
    for overrides in points:
        t0 = time.perf_counter()
        try:
            cfg = with_overrides(base_cfg, overrides)
            report = evaluate(cfg, weights, dataset, n, mode, workers, method=method)
        except DeviceError as exc:
            report = EvalReport.failed(n, STATUS_FAILED_BY_CONSTRUCTION, str(exc), mode)
        except (ConfigError, CrossbarSimError) as exc:
            log.warning("sweep point %s failed: %s", overrides, exc)
            report = EvalReport.failed(n, STATUS_ERROR, f"{type(exc).__name__}: {exc}", mode)
        out.append(SweepPoint(overrides, report, time.perf_counter() - t0))
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(points: list[SweepPoint]) -> str:
    """One row per point: grid values, status and the three metrics."""
    keys = list(points[0].overrides) if points else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys + ["status", "n_samples", "error_rate", "accuracy", "average_power",
                       "latency"])
    for p in points:
        r = p.report
        w.writerow([_fmt(p.overrides.get(k)) for k in keys]
                   + [r.status, r.n_samples, _fmt(r.error_rate), _fmt(r.accuracy),
                      _fmt(r.average_power), _fmt(r.latency)])
    return buf.getvalue()


def long_csv(points: list[SweepPoint]) -> str:
    """Plot-ready long format: one row per (point, metric)."""
    keys = list(points[0].overrides) if points else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["point"] + keys + ["status", "metric", "value"])
    for i, p in enumerate(points):
        r = p.report
        for metric, value in (("accuracy", r.accuracy), ("error_rate", r.error_rate),
                              ("average_power", r.average_power), ("latency", r.latency)):
            if value is None:
                continue
            w.writerow([i] + [_fmt(p.overrides.get(k)) for k in keys]
                       + [r.status, metric, _fmt(value)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# timing study

def synthetic_weights(n_in: int, n_out: int, seed: int = 0) -> WeightMatrices:
    rng = np.random.default_rng(seed)
    return WeightMatrices([rng.choice([-1.0, 1.0], size=(n_out, n_in))],
                          [rng.choice([-1.0, 1.0], size=n_out)])


def time_batches(graph: CircuitGraph, cfg: SimConfig, volts: np.ndarray, batch_size: int,
                 mode: str = "dc") -> float:
    """Wall time to simulate ``volts`` in batches, one fresh solver per batch.

    A fresh solver per batch mirrors one simulator invocation per PWL
    waveform: stamping and factorisation are paid once per batch and samples
    inside a batch warm-start from their predecessor.
    """
    t0 = time.perf_counter()
    for start, stop in batch_bounds(volts.shape[0], batch_size):
        solver = CircuitSolver(graph)
        if mode == "dc":
            x = None
            for v in volts[start:stop]:
                x = solver.solve_dc(v, x0=x).x
        else:
            n = stop - start
            times, vals = pwl_waveform(volts[start:stop], cfg.sampling_time,
                                       cfg.rise_fraction * cfg.sampling_time,
                                       0.5 * (cfg.vdd + cfg.vss))
            waves = {src: (times, vals[k]) for k, src in enumerate(graph.inputs)}
            solver.solve_transient(waves, n * cfg.sampling_time, cfg.dt,
                                   t_sampling=cfg.sampling_time)
    return time.perf_counter() - t0


@dataclass
class TimingRow:
    array_size: int
    batch_size: int
    parasitics: bool
    repeats: int
    n_samples: int
    per_sample_time: float
    per_sample_std: float


def timing_study(array_sizes, batch_sizes, base_cfg: SimConfig | None = None,
                 parasitics=(False, True), repeats: int = 3, n_samples: int | None = None,
                 mode: str = "dc", seed: int = 0) -> list[TimingRow]:
    """Mean per-sample wall time over (array size, batch size, parasitics)."""
    from .config import default_config

    if repeats < 1:
        raise ValidationError("must be >= 1", "repeats")
    n = n_samples or max(batch_sizes)
    rows = []
    for size in array_sizes:
        weights = synthetic_weights(size, size, seed)
        rng = np.random.default_rng([seed, size])
        feats = rng.uniform(0.0, 1.0, size=(n, size))
        for par in parasitics:
            if base_cfg is None:
                cfg = default_config([size, size], sim__parasitics=par)
            else:
                cfg = with_overrides(base_cfg, {"topology": [size, size], "sim.parasitics": par,
                                                "partitions.horizontal": [1],
                                                "partitions.vertical": [1]})
            graph = build_network(weights, None, cfg)
            volts = encode_input(feats, cfg)
            for b in batch_sizes:
                times = [time_batches(graph, cfg, volts, b, mode) / n for _ in range(repeats)]
                rows.append(TimingRow(size, b, bool(par), repeats, n, float(np.mean(times)),
                                      float(np.std(times))))
    return rows


def timing_csv(rows: list[TimingRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["array_size", "batch_size", "parasitics", "repeats", "n_samples",
                "per_sample_time", "per_sample_std"])
    for r in rows:
        w.writerow([r.array_size, r.batch_size, str(r.parasitics).lower(), r.repeats,
                    r.n_samples, repr(r.per_sample_time), repr(r.per_sample_std)])
    return buf.getvalue()
