import numpy as np
import pytest

from gpclogz.ep import ep_fit, reference_target
from gpclogz.linalg import KernelSpec, build_kernel
from gpclogz.target import TemperedTarget

K2 = np.array([[1.0, 0.8], [0.8, 1.0]])
Y2 = np.array([1.0, 1.0])


def random_problem(n, seed, amplitude=1.0, lengthscale=1.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    K = build_kernel(X, KernelSpec(lengthscale, amplitude, jitter=1e-6))
    return y, K


def prior_target(n, seed, beta=1.0, **kw):
    y, K = random_problem(n, seed, **kw)
    return TemperedTarget.from_prior(y, K, beta=beta)


def ep_target(n, seed, beta=0.5, **kw):
    y, K = random_problem(n, seed, **kw)
    return reference_target(y, K, ep_fit(y, K), beta=beta)


def fd_grad(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
