import pickle
import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning, NotFittedError
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import MinMaxScaler

from crossbar_sim.estimator import IMACClassifier
from crossbar_sim.exceptions import DimensionMismatch, FormatError, RangeError
from crossbar_sim.pipeline import evaluate


@pytest.fixture
def fitted(toy):
    cfg, weights, ds = toy
    return IMACClassifier(weights, cfg).fit(ds.samples, ds.labels), ds


def test_params_and_clone(toy):
    cfg, weights, _ = toy
    est = IMACClassifier(weights, cfg, overrides={"sim.parasitics": False}, workers=2)
    params = est.get_params()
    assert set(params) == {"weights", "config", "overrides", "mode", "workers"}
    twin = clone(est)
    assert twin.get_params()["workers"] == 2 and not hasattr(twin, "graph_")
    est.set_params(mode="transient")
    assert est.mode == "transient"


def test_not_fitted(toy):
    _, weights, ds = toy
    with pytest.raises(NotFittedError):
        IMACClassifier(weights).predict(ds.samples)


def test_predict_matches_pipeline(fitted, toy):
    est, ds = fitted
    cfg, weights, _ = toy
    pred = est.predict(ds.samples)
    report = evaluate(cfg, weights, ds)
    assert pred.tolist() == [r.predicted for r in report.records]
    assert est.score(ds.samples, ds.labels) == pytest.approx(report.accuracy)
    assert est.transform(ds.samples).shape == (10, 3)
    assert est.n_features_in_ == 6 and est.classes_.tolist() == [0, 1, 2]


def test_transient_mode_agrees(fitted, toy):
    est, ds = fitted
    cfg, weights, _ = toy
    tr = IMACClassifier(weights, cfg, mode="transient").fit(ds.samples)
    assert tr.predict(ds.samples).tolist() == est.predict(ds.samples).tolist()


def test_evaluate_report(fitted):
    est, ds = fitted
    rep = est.evaluate(ds.samples, ds.labels)
    assert rep.n_samples == 10 and rep.mode == "dc"


def test_input_validation(fitted):
    est, ds = fitted
    with pytest.raises(DimensionMismatch):
        est.predict(ds.samples[:, :5])
    with pytest.raises(RangeError):
        est.predict(ds.samples + 1.0)
    with pytest.raises(ValueError):
        est.predict(np.full((1, 6), np.nan))
    with pytest.raises(FormatError):
        est.evaluate(ds.samples, np.full(10, 0.5))
    with pytest.raises(ValueError):
        IMACClassifier().fit(ds.samples)
    with pytest.raises(ValueError):
        IMACClassifier(est.weights_, mode="ac").fit(ds.samples)


def test_pickle(fitted):
    est, ds = fitted
    est.predict(ds.samples[:2])
    again = pickle.loads(pickle.dumps(est))
    assert again.predict(ds.samples).tolist() == est.predict(ds.samples).tolist()


def test_from_mlp_in_pipeline():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 1, (60, 4))
    y = np.digitize(X[:, 0] - X[:, 1], [-0.3, 0.3])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        mlp = MLPClassifier(hidden_layer_sizes=(), max_iter=300, random_state=0).fit(X, y)
    est = IMACClassifier.from_mlp(mlp, overrides={"sim.mapping": "linear",
                                                  "sim.parasitics": False})
    pipe = make_pipeline(MinMaxScaler(clip=True), est).fit(X, y)
    assert pipe.predict(X).shape == (60,)
    assert pipe[-1].classes_.tolist() == [0, 1, 2]
    assert pipe.score(X, y) > 0.5
