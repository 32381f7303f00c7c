"""Command-line front end.

    crossbar-sim eval --config c.toml --weights w.json --dataset test.csv
    crossbar-sim sweep --config c.toml --weights w.json --dataset test.csv --grid grid.toml
    crossbar-sim export-spice --config c.toml --weights w.json --out net.sp
    crossbar-sim timing --array-sizes 32,64 --batch-sizes 1,10,50
    crossbar-sim presets

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
Every command that writes results also writes ``manifest.json`` next to
them with the resolved config, seed, input digests and phase timings.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
try:
    import tomllib as tomli
except ImportError:          # Python < 3.11
    import tomli

from . import __version__
from .config import (BITCELL_PRESETS, DEVICE_PRESETS, SCHEMA, default_config, load_config,
                     parse_override, serialize, to_flat, with_overrides)
from .data import file_digest, load_dataset, load_weights
from .exceptions import ConfigError, CrossbarSimError
from .pipeline import (build_graph, evaluate, grid_points, long_csv, sweep, sweep_csv,
                       timing_csv, timing_study)
from .spice import export_spice

log = logging.getLogger("crossbar_sim")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers

def _int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, value = parse_override(item)
        out[key] = value
    if getattr(args, "seed", None) is not None:
        out["sim.seed"] = args.seed
    return out


def _config(args):
    return load_config(args.config, _overrides(args))


def _dataset(args, cfg):
    return load_dataset(args.dataset, args.format, n_classes=cfg.topology.n_outputs,
                        n_features=cfg.topology.n_inputs, resize=args.resize,
                        labels_path=args.labels)


def _digests(args) -> dict:
    out = {}
    for name in ("config", "weights", "dataset", "labels", "grid"):
        p = getattr(args, name, None)
        if p:
            out[name] = {"path": str(p), "sha256": file_digest(p)}
    return out


def _manifest(args, argv, cfg, timings: dict, outputs: list[str], extra=None) -> dict:
    m = {
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "seed": cfg.rng_seed if cfg is not None else getattr(args, "seed", None),
        "config": to_flat(cfg) if cfg is not None else None,
        "config_toml": serialize(cfg) if cfg is not None else None,
        "inputs": _digests(args),
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "outputs": outputs,
        "environment": {"python": platform.python_version(), "numpy": np.__version__,
                        "scipy": scipy.__version__},
    }
    if extra:
        m.update(extra)
    return m


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_manifest(out_dir: Path, manifest: dict, name: str = "manifest.json"):
    _write(out_dir / name, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _phase(timings, name, t0):
    dt = time.perf_counter() - t0
    timings[name] = timings.get(name, 0.0) + dt
    log.info("phase=%s seconds=%.6f", name, dt)


def _fmt_latency(v):
    return "n/a" if v is None else f"{v:.6g} s"


def _print_metrics(report):
    print(f"error_rate: {report.error_rate!r}")
    print(f"average_power: {report.average_power!r} W")
    print(f"latency: {_fmt_latency(report.latency)}")


# --------------------------------------------------------------------------
# commands

def cmd_eval(args, argv) -> int:
    timings: dict = {}
    t0 = time.perf_counter()
    cfg = _config(args)
    weights = load_weights(args.weights)
    ds = _dataset(args, cfg)
    _phase(timings, "load", t0)
    report = evaluate(cfg, weights, ds, args.samples, args.mode, args.workers, timings=timings)
    for k in ("build", "solve", "aggregate"):
        log.info("phase=%s seconds=%.6f", k, timings.get(k, 0.0))
    out = Path(args.out_dir)
    _write(out / "report.json", report.to_json())
    _write(out / "config.toml", serialize(cfg))
    _write_manifest(out, _manifest(args, argv, cfg, timings,
                                   ["report.json", "config.toml"],
                                   {"mode": args.mode, "n_samples": report.n_samples,
                                    "workers": args.workers}))
    _print_metrics(report)
    return EXIT_OK


def _load_grid(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read grid {path}: {exc.strerror}")
    try:
        raw = json.loads(text) if path.suffix == ".json" else tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise UsageError(f"malformed grid {path}: {exc}")

    def flat(tree, prefix=""):
        out = {}
        for k, v in tree.items():
            key = f"{prefix}{k}"
            if isinstance(v, dict):
                out.update(flat(v, key + "."))
            else:
                out[key] = v
        return out

    grid = flat(raw)
    for k, v in grid.items():
        if not isinstance(v, list):
            grid[k] = [v]
    return grid


def cmd_sweep(args, argv) -> int:
    timings: dict = {}
    t0 = time.perf_counter()
    grid = _load_grid(args.grid)
    grid_points(grid)          # validates keys before any work
    cfg = _config(args)
    weights = load_weights(args.weights)
    ds = _dataset(args, cfg)
    _phase(timings, "load", t0)
    t0 = time.perf_counter()
    points = sweep(cfg, grid, weights, ds, args.samples, args.mode, args.workers)
    _phase(timings, "solve", t0)
    t0 = time.perf_counter()
    out = Path(args.out_dir)
    _write(out / "sweep.csv", sweep_csv(points))
    _write(out / "sweep_long.csv", long_csv(points))
    _write(out / "sweep.json", json.dumps(
        [{"overrides": p.overrides, "report": p.report.to_dict(records=False)} for p in points],
        indent=2, sort_keys=True) + "\n")
    _phase(timings, "aggregate", t0)
    _write_manifest(out, _manifest(
        args, argv, cfg, timings, ["sweep.csv", "sweep_long.csv", "sweep.json"],
        {"grid": grid, "mode": args.mode, "point_wall_times": [round(p.wall_time, 6)
                                                              for p in points]}))
    failed = sum(p.report.status != "ok" for p in points)
    print(f"points: {len(points)} (failed: {failed})")
    for p in points:
        r = p.report
        print(f"{json.dumps(p.overrides, sort_keys=True)} status={r.status} "
              f"error_rate={r.error_rate!r} average_power={r.average_power!r} "
              f"latency={_fmt_latency(r.latency)}")
    return EXIT_OK


def cmd_export_spice(args, argv) -> int:
    timings: dict = {}
    t0 = time.perf_counter()
    cfg = _config(args)
    weights = load_weights(args.weights)
    graph = build_graph(cfg, weights)
    _phase(timings, "build", t0)
    t0 = time.perf_counter()
    out = Path(args.out)
    counts = export_spice(graph, out, write_stub=args.stub)
    _phase(timings, "export", t0)
    manifest_dir = Path(args.out_dir) if args.out_dir else out.parent
    _write_manifest(manifest_dir, _manifest(args, argv, cfg, timings, [str(out)],
                                            {"counts": counts}),
                    name=f"{out.stem}.manifest.json")
    for k, v in counts.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_timing(args, argv) -> int:
    timings: dict = {}
    cfg = _config(args) if args.config else None
    flags = {"both": (False, True), "on": (True,), "off": (False,)}[args.parasitics]
    t0 = time.perf_counter()
    rows = timing_study(args.array_sizes, args.batch_sizes, cfg, flags, args.repeats,
                        args.samples, args.mode, args.seed or 0)
    _phase(timings, "solve", t0)
    out = Path(args.out_dir)
    _write(out / "timing.csv", timing_csv(rows))
    _write_manifest(out, _manifest(args, argv, cfg, timings, ["timing.csv"],
                                   {"array_sizes": args.array_sizes,
                                    "batch_sizes": args.batch_sizes,
                                    "repeats": args.repeats, "mode": args.mode}))
    for r in rows:
        print(f"size={r.array_size} batch={r.batch_size} parasitics={str(r.parasitics).lower()} "
              f"per_sample={r.per_sample_time:.6g} s")
    return EXIT_OK


def cmd_presets(args, argv) -> int:
    print("devices:")
    for name, (lo, hi) in DEVICE_PRESETS.items():
        print(f"  {name}: r_low={lo:g} ohm r_high={hi:g} ohm")
    print("bitcells (length x width in lambda, access resistance):")
    for kind, (n_len, n_wid, r_acc) in BITCELL_PRESETS.items():
        print(f"  {kind.value}: {n_len} x {n_wid}, {r_acc:g} ohm")
    if args.keys:
        print("config keys:")
        for key, spec in SCHEMA.items():
            print(f"  {key} ({spec.type}): {spec.doc}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def _common(p, need_dataset=True, need_config=True):
    p.add_argument("--config", required=need_config, help="config file (TOML)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, help="shorthand for --set sim.seed=N")
    p.add_argument("--out-dir", default=".", help="directory for reports and manifest")
    p.add_argument("--quiet", action="store_true", help="print metrics only")
    if need_dataset:
        p.add_argument("--weights", required=True, help="weight manifest (JSON)")
        p.add_argument("--dataset", required=True, help="dataset file")
        p.add_argument("--format", default="csv", choices=["csv", "idx"])
        p.add_argument("--labels", help="label file of an IDX pair")
        p.add_argument("--resize", default="crop", choices=["crop", "bilinear"])
        p.add_argument("--samples", type=int, help="number of samples (default: all)")
        p.add_argument("--mode", default="dc", choices=["dc", "transient"])
        p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crossbar-sim",
                                 description="Memristive crossbar network simulator.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate accuracy, power and latency")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate a grid of config overrides")
    _common(p)
    p.add_argument("--grid", required=True, help="TOML or JSON file: key -> list of values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-spice", help="write the network as a SPICE netlist")
    _common(p, need_dataset=False)
    p.add_argument("--weights", required=True, help="weight manifest (JSON)")
    p.add_argument("--out", required=True, help="netlist path")
    p.add_argument("--stub", action="store_true", help="also write a behavioural neuron.sp")
    p.set_defaults(func=cmd_export_spice, out_dir=None)

    p = sub.add_parser("timing", help="per-sample wall time vs array and batch size")
    _common(p, need_dataset=False, need_config=False)
    p.add_argument("--array-sizes", type=_int_list, default=[32, 64])
    p.add_argument("--batch-sizes", type=_int_list, default=[1, 10, 50])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--samples", type=int, help="samples per measurement (default: largest batch)")
    p.add_argument("--parasitics", choices=["both", "on", "off"], default="both")
    p.add_argument("--mode", default="dc", choices=["dc", "transient"])
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("presets", help="list device and bitcell presets")
    p.add_argument("--keys", action="store_true", help="also list every config key")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s %(message)s",
                        stream=sys.stderr, force=True)
    try:
        return args.func(args, argv)
    except (ConfigError, UsageError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CrossbarSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
