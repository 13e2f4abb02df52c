import numpy as np
import pytest

from zerocap.experiments import CRITERIA, product, surface

_ACCEPTANCE = {}


def record_criterion(n: int, part: str, passed: bool, detail: str = ""):
    _ACCEPTANCE.setdefault(n, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        parts = _ACCEPTANCE.get(n)
        if not parts:
            tr.write_line(f"criterion {n}: NOT RUN   {CRITERIA[n]}")
            continue
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}      {CRITERIA[n]}")
        for part, p, detail in parts:
            tr.write_line(f"    [{'x' if p else ' '}] {part} {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_surface():
    return surface(2, 1 / 8)


@pytest.fixture(scope="session")
def small_product():
    return product(2, 1 / 8, 1 / 4)
