import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kernelflow.kernels import Kernel, KernelSpec, kernel_matrix

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gaussian_problem(rng, n=20, p=1, bandwidth=1.0, jitter=0.0):
    X = rng.uniform(-3.0, 3.0, size=(n, p))
    K = kernel_matrix(KernelSpec(Kernel.GAUSSIAN, bandwidth), X, jitter=jitter)
    y = rng.standard_normal(n)
    return X, K, y


@pytest.fixture
def problem(rng):
    """Small well-conditioned Gaussian-kernel regression instance."""
    return gaussian_problem(rng, n=20, p=2, bandwidth=1.5, jitter=1e-3)


_CRITERIA = {}


def record_criterion(criterion, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    _CRITERIA[str(criterion)] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: (int(k.rstrip("ab")), k)):
        terminalreporter.write_line(_CRITERIA[key])
