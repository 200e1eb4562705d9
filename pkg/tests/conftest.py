import numpy as np
import pytest

from vqprecond import CovarianceKernel, build_kl_basis, make_mesh


@pytest.fixture(scope="session")
def mesh16():
    return make_mesh(16)


@pytest.fixture(scope="session")
def mesh32():
    return make_mesh(32)


@pytest.fixture(scope="session")
def basis16(mesh16):
    return build_kl_basis(CovarianceKernel(1.0, 0.1), mesh16, 40)


@pytest.fixture(scope="session")
def basis32(mesh32):
    return build_kl_basis(CovarianceKernel(1.0, 0.1), mesh32, 64)


@pytest.fixture(scope="session")
def basis64():
    return build_kl_basis(CovarianceKernel(1.0, 0.1), make_mesh(64), 32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:2d}: {title} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
