import numpy as np
import pytest


def naive_dft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """O(n^2) DFT along axis 0, written straight from the summation."""
    n = x.shape[0]
    sign = 1.0 if inverse else -1.0
    t = np.arange(n)
    kernel = np.exp(sign * 2j * np.pi * np.outer(t, t) / n)
    out = kernel @ x
    return out / n if inverse else out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print and record one PASS/FAIL line for an acceptance criterion."""

    def emit(number: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
