import numpy as np
import pytest

from htmc.chains import pseudoinverse, random_chain, to_laplacian
from htmc.gradients import apply_direction_step, workspace

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def exact_iterate(mode, n, rng):
    chain = random_chain(mode, n, rng)
    return chain, pseudoinverse(to_laplacian(chain))


def perturbed_iterate(mode, n, rng, scale=0.01):
    """An iterate a small step off the pseudoinverse manifold, with unclamped ``d``."""
    while True:
        chain, Lp = exact_iterate(mode, n, rng)
        step = scale * rng.standard_normal((n, n))
        Lp2 = apply_direction_step(Lp, step)
        ws = workspace(Lp2)
        if ws.active.all() and ws.d.min() > 1e-3:
            return chain, Lp2


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
