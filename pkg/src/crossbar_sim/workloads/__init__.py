"""Checked-in workloads.

``mnist10``: binary 100x32x10 network trained offline on 10x10 MNIST crops
(centre 20x20 crop, 2x2 block average) with 200 held-out test samples.  See
``scripts/train_regression_workload.py`` for how it was produced.
"""

from importlib import resources
from pathlib import Path


def workload_dir(name: str = "mnist10") -> Path:
    return Path(str(resources.files(__package__) / name))


def regression_workload(overrides=None):
    """(config, weights, dataset) of the checked-in regression workload."""
    from ..config import load_config
    from ..data import load_dataset, load_weights

    d = workload_dir()
    cfg = load_config(d / "config.toml", overrides)
    weights = load_weights(d / "weights.json")
    ds = load_dataset(d / "test_200.csv", n_classes=10)
    return cfg, weights, ds
