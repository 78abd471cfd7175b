import numpy as np
import pytest

from slqheat.fem import assemble_space
from slqheat.problem import ProblemSpec
from slqheat.stochastics import TimeGrid

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    print(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def sine(k, a=0.0, b=1.0):
    return lambda x: np.sin(k * np.pi * (x - a) / (b - a))


def bump(x):
    return 16.0 * x**2 * (1.0 - x) ** 2


def modulated(t, x):
    return (1.0 + np.cos(np.pi * t)) * np.sin(np.pi * x)


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def small_spec():
    """Three modes, five steps, every data term switched on."""
    space = assemble_space(0.0, 1.0, 4)
    return ProblemSpec(space, TimeGrid(1.0, 5), 0.0, 1.0, x0=sine(1), sigma=lambda t, x: (1 + t) * x * (1 - x))
