"""scikit-learn style wrapper around a simulated crossbar classifier."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import SimConfig, default_config, load_config, with_overrides
from .data import Dataset, encode_input
from .pipeline import EvalReport, batch_bounds, build_graph, evaluate, pwl_waveform
from .solver import CircuitSolver
from .validation import as_weights, check_features, check_labels


class IMACClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Classify feature vectors in [0, 1] on a simulated memristive crossbar network.

    Training is out of scope: ``fit`` deploys ``weights`` (a
    :class:`~crossbar_sim.circuit.WeightMatrices`, a weight-manifest path or
    a fitted ``MLPClassifier``) onto the circuit described by ``config``.
    ``transform`` returns the output-neuron voltages and ``predict`` their
    argmax.

    Parameters
    ----------
    weights : WeightMatrices, path or fitted MLP
    config : SimConfig, path or None
        Defaults to every built-in default for the weights' topology.
    overrides : dict, optional
        Flat ``key -> value`` config overrides applied on top of ``config``.
    mode : {"dc", "transient"}
    workers : int
        Worker processes used by :meth:`evaluate`.
    """

    def __init__(self, weights=None, config=None, overrides=None, mode="dc", workers=1):
        self.weights = weights
        self.config = config
        self.overrides = overrides
        self.mode = mode
        self.workers = workers

    def _resolve_config(self, weights) -> SimConfig:
        cfg = self.config
        if cfg is None:
            cfg = default_config(weights.layer_sizes)
        elif not isinstance(cfg, SimConfig):
            cfg = load_config(cfg)
        if self.overrides:
            cfg = with_overrides(cfg, self.overrides)
        return cfg

    def fit(self, X, y=None):
        if self.weights is None:
            raise ValueError("IMACClassifier needs trained weights; training is not supported")
        if self.mode not in ("dc", "transient"):
            raise ValueError(f"unknown mode {self.mode!r}")
        weights = as_weights(self.weights)
        cfg = self._resolve_config(weights)
        weights.check_topology(cfg.topology)
        X = check_features(X, weights.layer_sizes[0])
        if y is not None:
            check_labels(y, X.shape[0], weights.layer_sizes[-1])
        self.weights_ = weights
        self.config_ = cfg
        self.graph_ = build_graph(cfg, weights)
        self.classes_ = np.arange(weights.layer_sizes[-1])
        self.n_features_in_ = weights.layer_sizes[0]
        self._solver = None
        return self

    def _get_solver(self) -> CircuitSolver:
        if getattr(self, "_solver", None) is None:
            self._solver = CircuitSolver(self.graph_)
        return self._solver

    def decision_function(self, X) -> np.ndarray:
        """Output-neuron voltages, one row per sample."""
        check_is_fitted(self, "graph_")
        X = check_features(X, self.n_features_in_)
        cfg = self.config_
        volts = encode_input(X, cfg)
        solver = self._get_solver()
        out = np.empty((X.shape[0], len(self.graph_.outputs)))
        for start, stop in batch_bounds(X.shape[0], cfg.batch_size):
            if self.mode == "dc":
                x0 = None
                for i in range(start, stop):
                    res = solver.solve_dc(volts[i], x0=x0)
                    out[i] = res.outputs
                    x0 = res.x if res.converged else None
            else:
                t_s = cfg.sampling_time
                times, vals = pwl_waveform(volts[start:stop], t_s, cfg.rise_fraction * t_s,
                                           0.5 * (cfg.vdd + cfg.vss))
                waves = {src: (times, vals[k]) for k, src in enumerate(self.graph_.inputs)}
                tr = solver.solve_transient(waves, (stop - start) * t_s, cfg.dt, t_sampling=t_s,
                                            settle_fraction=cfg.settle_fraction)
                out[start:stop] = tr.outputs
        return out

    def transform(self, X) -> np.ndarray:
        return self.decision_function(X)

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    def evaluate(self, X, y, n_samples: int | None = None) -> EvalReport:
        """Full accuracy/power/latency report on (X, y)."""
        check_is_fitted(self, "graph_")
        X = check_features(X, self.n_features_in_)
        y = check_labels(y, X.shape[0], len(self.classes_))
        ds = Dataset(X, y, len(self.classes_))
        return evaluate(self.config_, self.weights_, ds, n_samples, self.mode, self.workers,
                        graph=self.graph_)

    @classmethod
    def from_mlp(cls, mlp, **kwargs) -> "IMACClassifier":
        """Wrap the weights of a fitted ``sklearn.neural_network.MLPClassifier``."""
        return cls(weights=as_weights(mlp), **kwargs)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_solver"] = None      # LU factors are not picklable
        return state
