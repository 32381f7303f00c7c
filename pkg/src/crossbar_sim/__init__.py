"""Circuit-level simulation of deep networks mapped onto memristive crossbars.

Build the analog circuit of a trained network (memristor bitcells, wire
parasitics, behavioural neurons, optional partitioning into subarrays),
solve it with modified nodal analysis and report accuracy, power and
latency.
"""

__version__ = "0.1.0"

from .circuit import CircuitGraph, WeightMatrices, apply_variation, build_network
from .config import SimConfig, builtin_preset, default_config, load_config
from .data import Dataset, encode_input, load_dataset, load_weights, save_weights
from .estimator import IMACClassifier
from .exceptions import CrossbarSimError
from .partition import plan_for_subarray, plan_partitions
from .pipeline import EvalReport, classify, evaluate, schedule_batches, sweep
from .solver import CircuitSolver, neuron_transfer, solve_dc, solve_transient, stamp
from .spice import export_spice, parse_spice
from .workloads import regression_workload

__all__ = [
    "CircuitGraph", "CircuitSolver", "CrossbarSimError", "Dataset", "EvalReport",
    "IMACClassifier", "SimConfig", "WeightMatrices", "apply_variation", "build_network",
    "builtin_preset", "classify", "default_config", "encode_input", "evaluate",
    "export_spice", "load_config", "load_dataset", "load_weights", "neuron_transfer",
    "parse_spice", "plan_for_subarray", "plan_partitions", "regression_workload",
    "save_weights", "schedule_batches", "solve_dc", "solve_transient", "stamp", "sweep",
]
