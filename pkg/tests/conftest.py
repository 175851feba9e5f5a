import numpy as np
import pytest

from abreu import model as M
from abreu import solver as S
from abreu.geometry import DomainSpec, build_grid
from abreu.model import Envelope, GrowthEnvelope, LagrangianModel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def zero_model():
    """F = 0 with all envelopes zero, so H(t) = t and G(x) = x^4 / 2."""
    z = Envelope.zero()
    env = GrowthEnvelope(z, z, z, z, z, z)

    def scalar(x, zz, p):
        return np.zeros(np.shape(zz))

    def vector(x, zz, p):
        return np.zeros(np.shape(p))

    def matrix(x, zz, p):
        return np.zeros(np.shape(p) + (np.shape(p)[-1],))

    return LagrangianModel("zero", scalar, scalar, vector, matrix, scalar, vector, env)


def closed_form_minimiser(grid, r0=0.5):
    return np.maximum(0.5 * (grid.x1 ** 2 + grid.x2 ** 2), 0.5 * r0 * r0)


def random_admissible(grid, rng, amp=2e-4):
    """Strictly discretely convex field: a random SPD quadratic plus small noise."""
    a = rng.uniform(0.6, 1.4, 2)
    c = rng.uniform(-0.2, 0.2)
    b = rng.uniform(-0.3, 0.3, 2)
    u = 0.5 * (a[0] * grid.x1 ** 2 + a[1] * grid.x2 ** 2) + c * grid.x1 * grid.x2 + b[0] * grid.x1 + b[1] * grid.x2
    return u + amp * rng.standard_normal(grid.shape)


@pytest.fixture(scope="session")
def spec():
    return DomainSpec()


@pytest.fixture(scope="session")
def grid17(spec):
    return build_grid(spec, 17)


@pytest.fixture(scope="session")
def grid33(spec):
    return build_grid(spec, 33)


@pytest.fixture(scope="session")
def quadratic_run(spec, grid33):
    """Baseline and default eps sweep for the quadratic test on 33 x 33."""
    mdl = M.quadratic_lagrangian()
    pen = M.build_penalty(mdl.envelopes)
    base = S.baseline_minimize(grid33, spec, mdl)
    sweep = S.continuation_sweep(grid33, spec, mdl, pen, S.EpsSchedule(2.0 ** -4, 0.5, 8), baseline=base,
                                 reference=closed_form_minimiser(grid33))
    return {"model": mdl, "pen": pen, "baseline": base, "sweep": sweep}
