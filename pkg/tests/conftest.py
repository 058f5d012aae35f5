import numpy as np
import pytest

from aflite.core import EmbeddedDataset

_ACCEPTANCE_LINES: list[str] = []


def make_dataset(features, labels, prefix="x"):
    features = np.asarray(features, dtype=float)
    ids = tuple(f"{prefix}{i}" for i in range(len(features)))
    return EmbeddedDataset(ids, features, np.asarray(labels))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def separable():
    """Two well separated blobs along the first axis."""
    r = np.random.default_rng(7)
    n = 60
    labels = np.repeat([0, 1], n // 2)
    features = np.column_stack([
        np.where(labels == 0, -3.0, 3.0) + r.normal(scale=0.3, size=n),
        r.normal(size=n),
    ])
    return make_dataset(features, labels)


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion."""
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
