import numpy as np
import pytest

from smasafe.thermal import LumpedThermalParams, build_block_system

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    def record(name, passed, detail):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


@pytest.fixture
def p_ref():
    return LumpedThermalParams(0.9, 3.0, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_params(rng, n, ambient=(15.0, 30.0)):
    """Physically valid lumped coefficients with ambient in the given range."""
    a1 = rng.uniform(0.5, 0.99, n)
    a2 = rng.uniform(0.5, 10.0, n)
    amb = rng.uniform(*ambient, n)
    return a1, a2, (1.0 - a1) * amb


def random_system(rng, m=10):
    a1, a2, a3 = random_params(rng, m)
    return build_block_system([LumpedThermalParams(*p) for p in zip(a1, a2, a3)])
