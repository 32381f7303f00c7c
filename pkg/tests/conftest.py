import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crossbar_sim.circuit import WeightMatrices
from crossbar_sim.config import default_config
from crossbar_sim.data import Dataset

settings.register_profile("ci", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


def random_weights(sizes, rng, binary=True):
    ws, bs = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        if binary:
            ws.append(rng.choice([-1.0, 1.0], size=(b, a)))
            bs.append(rng.choice([-1.0, 1.0], size=b))
        else:
            ws.append(rng.uniform(-1, 1, size=(b, a)))
            bs.append(rng.uniform(-1, 1, size=b))
    return WeightMatrices(ws, bs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    """Small two-layer network with parasitics, its config and a dataset."""
    rng = np.random.default_rng(5)
    sizes = [6, 4, 3]
    weights = random_weights(sizes, rng)
    cfg = default_config(sizes, sim__batch_size=4)
    X = rng.uniform(0, 1, size=(10, 6))
    y = rng.integers(0, 3, size=10)
    return cfg, weights, Dataset(X, y, 3)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""
    def check(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _CRITERIA[number] = line
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
