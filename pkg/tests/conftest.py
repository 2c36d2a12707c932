import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kpid import KernelSpec, SnapshotDataset  # noqa: E402


def random_dataset(rng, M, n_aug=3, m=1, p=0, scale=1.0):
    X = rng.uniform(-scale, scale, (M, n_aug))
    U = rng.uniform(-1, 1, (M, m))
    Y = np.tanh(X) + 0.1 * rng.uniform(-1, 1, (M, n_aug))
    return SnapshotDataset(X, U, Y, p=p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def gauss():
    return KernelSpec.gaussian(20.0)


DESK_M = 2000
DESK_TRAIN_SEED = 0
DESK_QUERY_SEED = 1
DUFFING_TRUTH = (1.0, -1.0, 0.0)


@pytest.fixture(scope="session")
def duffing_desk():
    """Desk-scale Duffing experiment shared by the slow tests (about 10 s)."""
    from kpid import train
    from kpid.systems import (
        SamplingConfig,
        augmented_duffing,
        generate_query,
        generate_training,
        uniform_controls,
    )

    system = augmented_duffing()
    cfg = SamplingConfig(DESK_M, [(-3, 3)] * 5, [(-2, 2)], dt=0.1, seed=DESK_TRAIN_SEED)
    data = generate_training(system, cfg)
    model = train(data, KernelSpec.gaussian(20.0), 1e-6)
    controls = uniform_controls(50, -2, 2, seed=DESK_QUERY_SEED)
    query = generate_query(system, [1.0, 0.0], DUFFING_TRUTH, controls, dt=0.1)
    return {"system": system, "data": data, "model": model, "query": query,
            "controls": controls}


ACCEPTANCE_LOG = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed at session end."""

    def record(name, passed, detail=""):
        line = f"{name:<4} {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LOG.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LOG:
            terminalreporter.write_line(line)
