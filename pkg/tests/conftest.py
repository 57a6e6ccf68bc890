import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

MNIST_DIR = Path(os.environ.get("PERMGAUSS_MNIST", "/root/data/mnist"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mnist_available() -> bool:
    from permgauss.dataio import MNIST_FILES, find_mnist_file

    try:
        for stem in MNIST_FILES.values():
            find_mnist_file(MNIST_DIR, stem)
    except FileNotFoundError:
        return False
    return True


@pytest.fixture(scope="session")
def mnist():
    if not mnist_available():
        pytest.skip(f"MNIST not found in {MNIST_DIR} (set PERMGAUSS_MNIST)")
    from permgauss.dataio import load_mnist

    return load_mnist(MNIST_DIR)


@pytest.fixture(scope="session")
def tiny_data():
    """A small separable synthetic dataset with MNIST-shaped inputs."""
    from permgauss.dataio import Dataset

    g = np.random.default_rng(7)
    centers = g.uniform(0, 1, size=(10, 784))
    train_y = g.integers(0, 10, size=600)
    test_y = g.integers(0, 10, size=200)
    noise = lambda n: g.normal(0, 0.1, size=(n, 784))
    train_x = np.clip(centers[train_y] + noise(600), 0, 1)
    test_x = np.clip(centers[test_y] + noise(200), 0, 1)
    return Dataset(train_x, train_y, test_x, test_y)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.summary_lines():
        terminalreporter.write_line(line)
