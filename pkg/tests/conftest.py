import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from oqcontrol.model import case1_params

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

RHO_MIXED = np.eye(4) / 4
TARGET_GROUND = np.diag([1.0, 0.0, 0.0, 0.0])


@pytest.fixture
def params():
    return case1_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n=4):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def random_density(rng, rank=4):
    a = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_angles(rng):
    return tuple(np.arccos(rng.uniform(-1, 1, 2))), tuple(rng.uniform(0, 2 * np.pi, 2))


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])


@pytest.fixture
def acceptance(request, capsys):
    """``acceptance(n, ok, detail)`` prints one PASS/FAIL line and asserts ``ok``."""
    def record(n, ok, detail):
        line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.acceptance_lines[n] = line
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record
