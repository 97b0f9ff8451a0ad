import numpy as np
import pytest

from spikepgd.data import synth_dataset
from spikepgd.net import Conv2d, Dense, Flatten, MaxPool2x2, Network, ReLU, accuracy, desk_cnn, init_params, sgd_epoch
from spikepgd.tensor import SeededRandom


def numerical_grad(f, x, h=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a, b):
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-30)
    return np.linalg.norm(a - b) / den


def small_cnn(seed=0, shape=(2, 4, 4), classes=3):
    c, h, w = shape
    layers = [
        Conv2d(c, 3, 3), ReLU(), MaxPool2x2(),
        Conv2d(3, 4, 3), ReLU(), Flatten(),
        Dense(4 * (h // 2) * (w // 2), classes),
    ]
    return init_params(Network(layers, shape, classes), SeededRandom(seed))


@pytest.fixture
def rng():
    return SeededRandom(1234)


@pytest.fixture(scope="session")
def desk_data():
    train = synth_dataset(0, 1000, split="train")
    test = synth_dataset(0, 200, split="test")
    return train, test


@pytest.fixture(scope="session")
def trained_desk(desk_data):
    """The desk CNN after 20 epochs of plain SGD on synthetic data."""
    train, test = desk_data
    net = desk_cnn(rng=SeededRandom(1))
    rng = SeededRandom(2)
    for epoch in range(20):
        sgd_epoch(net, train, 0.05, rng.fork(epoch))
    assert accuracy(net, test.images, test.labels) >= 0.9
    return net


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
