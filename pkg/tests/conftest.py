"""Shared helpers: tiny model/data builders and the acceptance summary hook."""

import numpy as np
import pytest

from csrlab.data import Dataset
from csrlab.model import init_model

_ACCEPTANCE_LINES = []


def record_criterion(num, name, ok, detail=""):
    """One pass/fail line per acceptance criterion, echoed in the terminal
    summary so the verdicts survive pytest's output capture."""
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {num:2d}: {name}"
    if detail:
        line += f" -- {detail}"
    _ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def tiny_model(rng, sizes=(3, 5, 4)):
    return init_model(sizes, rng)


def random_onehot(rng, n, k):
    labels = rng.integers(0, k, size=n)
    out = np.zeros((n, k))
    out[np.arange(n), labels] = 1.0
    return labels, out


def toy_dataset(rng, n=40, k=3, d=4, clean=True):
    X = rng.normal(size=(n, d))
    y = rng.integers(0, k, size=n).astype(np.int64)
    return Dataset(X, y, k, y.copy() if clean else None, "train")


@pytest.fixture
def rng():
    return np.random.default_rng(7)
