"""Input checks shared by the estimator, the pipeline and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .circuit import WeightMatrices
from .exceptions import DimensionMismatch, FormatError, RangeError


def check_features(X, n_features: int | None = None) -> np.ndarray:
    """2-D float array of features in [0, 1]."""
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_features is not None and X.shape[1] != n_features:
        raise DimensionMismatch(f"X has {X.shape[1]} features, network expects {n_features}")
    if X.min() < 0.0 or X.max() > 1.0:
        raise RangeError("features must lie in [0, 1]")
    return X


def check_labels(y, n_samples: int, n_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise DimensionMismatch(f"expected {n_samples} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise FormatError("labels must be integer class indices")
        y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise FormatError("labels must be non-negative")
    if n_classes is not None and y.size and y.max() >= n_classes:
        raise FormatError(f"label {int(y.max())} is out of range for {n_classes} classes")
    return y


def check_voltages(v, vss: float, vdd: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise RangeError("input voltages must be finite")
    if v.size and (v.min() < vss - 1e-12 or v.max() > vdd + 1e-12):
        raise RangeError(f"input voltages must lie in [{vss}, {vdd}]")
    return v


def as_weights(obj) -> WeightMatrices:
    """Accept WeightMatrices, a weight manifest path or a fitted sklearn MLP."""
    if isinstance(obj, WeightMatrices):
        return obj
    if hasattr(obj, "coefs_") and hasattr(obj, "intercepts_"):
        return WeightMatrices([np.asarray(c).T for c in obj.coefs_],
                              [np.asarray(b) for b in obj.intercepts_])
    if isinstance(obj, (list, tuple)) and len(obj) == 2:
        return WeightMatrices(list(obj[0]), list(obj[1]))
    if isinstance(obj, str) or hasattr(obj, "__fspath__"):
        from .data import load_weights
        return load_weights(obj)
    raise FormatError(f"cannot interpret {type(obj).__name__} as network weights")
