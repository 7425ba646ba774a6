import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpam_laplace import TorusField, make_g, minimize, solve_gpam
from gpam_laplace.observables import Observable, make_profile
from gpam_laplace.solver import SolverConfig

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def smooth_random_field(rng: np.random.Generator, n: int, amp: float = 1.0, decay: float = 2.0) -> TorusField:
    """Real field with |coeff_k| ~ (1 + |k|^2)^(-decay/2)."""
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    m = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * (1.0 + k2) ** (-decay / 2)
    return TorusField(amp * m)


class Small:
    """Cheap nonlinear configuration on a 16-grid for unit tests."""

    def __init__(self, kind="time_average", g="sin3", scale=2.5, n=16, steps=12, T=0.1):
        self.cfg = SolverConfig(n, T, steps, make_g(g, scale))
        weight = TorusField.constant(1.0, n) + TorusField.trig((1, 1), n, "sin", 0.6)
        self.F = Observable(kind, make_profile("tanh", a=1.0, b=2.0, x0=0.3), weight)
        self.u0 = TorusField.constant(1.0, n) + TorusField.trig((1, 0), n, "cos", 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small():
    return Small()


@pytest.fixture(scope="session")
def small_min(small):
    res = minimize(small.F, small.cfg, small.u0, tol=1e-11)
    w = solve_gpam(res.h_star, small.u0, small.cfg)
    return res, w


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
