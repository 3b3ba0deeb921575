import numpy as np
import pytest

from uavurllc.sim import TrafficConfig

# filled by test_acceptance.py; printed once at the end of the session
ACCEPTANCE_LINES: list = []


def write_series(path, n=160, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    close = 100 + 10 * np.sin(2 * np.pi * t / 25) + rng.normal(0, 1.0, n)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("Date,Close\n")
        for i, v in enumerate(close):
            fh.write(f"d{i},{v:.6f}\n")
    return path


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    return write_series(tmp_path_factory.mktemp("data") / "series.csv")


@pytest.fixture(scope="session")
def small_traffic(small_dataset):
    """Short synthetic trace: 40-slot warm-up, 120 evaluation slots."""
    return TrafficConfig(dataset=str(small_dataset), window=40, refit_every=60, max_arrivals=200.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
