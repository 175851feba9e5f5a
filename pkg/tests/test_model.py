import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abreu import model as M
from abreu.model import BilinearWeight, ConstantWeight, Envelope, GrowthEnvelope

from conftest import zero_model

ONES = GrowthEnvelope(*(Envelope.constant(1.0) for _ in range(6)))


def models():
    table = 1.0 + 0.3 * np.add.outer(np.linspace(-1, 1, 5), np.linspace(0, 1, 4))
    return [M.quadratic_lagrangian(), M.exp_lagrangian(), M.rochet_chone(2.0), M.rochet_chone(1.5),
            M.rochet_chone(3.5), M.rochet_chone(2.0, BilinearWeight(table)), zero_model()]


MODELS = models()
IDS = ["quadratic", "exp", "rc2", "rc1.5", "rc3.5", "rc2-table", "zero"]


def at(x, z, p):
    return np.atleast_2d(np.asarray(x, float)), np.atleast_1d(np.asarray(z, float)), np.atleast_2d(np.asarray(p, float))


def test_rochet_chone_point_values():
    m = M.rochet_chone(2.0)
    x, z, p = at([0.5, 0.5], 1.0, [1.0, 0.0])
    assert m.F(x, z, p)[0] == pytest.approx(1.0)
    assert m.F_z(x, z, p)[0] == 1.0
    assert np.allclose(m.F_p(x, z, p)[0], [0.5, -0.5])
    xs = np.array([[0.3, -0.2], [0.1, 0.6]])
    assert np.allclose(m.F(xs, np.zeros(2), xs), -0.5 * np.sum(xs * xs, -1))
    assert np.allclose(m.F_pp(xs, np.zeros(2), np.random.default_rng(0).normal(size=(2, 2))), np.eye(2))


def test_rochet_chone_default_envelopes():
    env = M.rochet_chone(2.0).envelopes
    t = np.linspace(0, 5, 11)
    assert np.allclose(env.f0(t), 1 + t)
    assert np.allclose(env.g0(t), 2 + t)


def test_rochet_chone_rejects_q():
    with pytest.raises(ValueError):
        M.rochet_chone(0.5)


def test_exp_point_values():
    m = M.exp_lagrangian()
    x, z, p = at([0.1, 0.2], 0.0, [0.0, 0.0])
    assert m.F(x, z, p)[0] == 1.0
    assert np.allclose(m.F_p(x, z, p), 0)
    assert np.allclose(m.F_pp(x, z, p)[0], 2 * np.eye(2))
    x, z, p = at([0.1, 0.2], 0.0, [1.0, 0.0])
    assert m.F(x, z, p)[0] == pytest.approx(np.e)
    assert np.allclose(m.F_p(x, z, p)[0], [2 * np.e, 0])


def test_exp_envelope_at_one_one():
    m = M.exp_lagrangian()
    x, z, p = at([0.0, 0.0], 0.0, [1.0, 1.0])
    lhs = np.linalg.norm(m.F_p(x, z, p)[0])
    assert lhs == pytest.approx(2 * np.sqrt(2) * np.e ** 2)
    assert lhs <= m.envelopes.f0(0.0) * m.envelopes.g0(np.sqrt(2))
    assert m.envelopes.g0(np.sqrt(2)) == pytest.approx(2 * (1 + np.sqrt(2)) * np.e ** 2)


def test_penalty_all_ones():
    pen = M.build_penalty(ONES)
    assert pen.closed_form
    assert pen.H(2.0) == pytest.approx(10.0)
    assert pen.G(1.0) == pytest.approx(11 / 6, rel=1e-14)
    assert pen.G(-1.0) == pytest.approx(11 / 6, rel=1e-14)
    assert pen.dG(1.0) == pytest.approx(8.0)
    assert pen.dG(-1.0) == pytest.approx(-8.0)


def test_penalty_all_ones_by_quadrature():
    env = GrowthEnvelope(*(Envelope(lambda t: np.ones_like(t), lambda t: np.zeros_like(t)) for _ in range(6)))
    pen = M.build_penalty(env)
    assert not pen.closed_form
    assert pen.G(1.0) == pytest.approx(11 / 6, rel=1e-12)
    assert pen.dG_independent(np.array([1.0]))[0] == pytest.approx(8.0, rel=1e-12)


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_penalty_origin(m):
    pen = M.build_penalty(m.envelopes)
    assert pen.G(0.0) == 0.0
    assert pen.dG(0.0) == 0.0


def test_exp_penalty_overflow_is_inf():
    pen = M.build_penalty(M.exp_lagrangian().envelopes)
    assert np.isinf(pen.G(np.array([8.0]))[0])
    assert 5.0 < pen.finite_range() < 6.0


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_penalty_shape_properties(m):
    pen = M.build_penalty(m.envelopes)
    x = np.linspace(-min(3.0, pen.finite_range()), min(3.0, pen.finite_range()), 61)
    assert np.allclose(pen.G(x), pen.G(-x), rtol=1e-13)
    assert np.allclose(pen.dG(x), -pen.dG(-x), rtol=1e-13)
    assert np.all(pen.d2G(x) >= 2 * pen.H(x * x))
    assert np.all(2 * pen.H(x * x) >= 2 * x * x)
    # equality holds for the zero envelopes, so allow rounding there
    assert np.all(pen.dG(x) * x >= 2 * x ** 4 * (1 - 8 * np.finfo(float).eps))


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_penalty_derivative_by_differences(m):
    pen = M.build_penalty(m.envelopes)
    x = np.linspace(-2.0, 2.0, 23)
    h = 1e-5
    fd = (pen.G(x + h) - pen.G(x - h)) / (2 * h)
    assert np.max(np.abs(fd - pen.dG(x)) / (1 + np.abs(pen.dG(x)))) <= 1e-6
    fd2 = (pen.dG(x + h) - pen.dG(x - h)) / (2 * h)
    assert np.max(np.abs(fd2 - pen.d2G(x)) / (1 + np.abs(pen.d2G(x)))) <= 1e-6


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_envelopes_nonnegative_nondecreasing(m):
    t = np.linspace(0, 10, 201)
    for e in m.envelopes.all_envelopes():
        v = e(t)
        assert np.all(v >= 0)
        assert np.all(np.diff(v) >= 0)
        assert np.all(e.deriv(t) >= 0)


def samples(rng, k=64, p_scale=1.5):
    x = rng.uniform(-0.7, 0.7, (k, 2))
    z = rng.uniform(-2, 2, k)
    p = rng.uniform(-p_scale, p_scale, (k, 2))
    return x, z, p


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_derivatives_match_differences(m):
    rng = np.random.default_rng(3)
    x, z, p = samples(rng)
    p[np.linalg.norm(p, axis=-1) < 0.2] += 0.5  # keep clear of the regularised kink
    h = 1e-6

    def rel(a, b):
        return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))

    assert rel((m.F(x, z + h, p) - m.F(x, z - h, p)) / (2 * h), m.F_z(x, z, p)) <= 1e-6
    fp = m.F_p(x, z, p)
    fpp = m.F_pp(x, z, p)
    fpz = m.F_pz(x, z, p)
    trace = np.zeros(len(z))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        assert rel((m.F(x, z, p + e) - m.F(x, z, p - e)) / (2 * h), fp[:, i]) <= 1e-6
        col = (m.F_p(x, z, p + e) - m.F_p(x, z, p - e)) / (2 * h)
        assert rel(col, fpp[:, :, i]) <= 1e-6
        trace += (m.F_p(x + e, z, p)[:, i] - m.F_p(x - e, z, p)[:, i]) / (2 * h)
    assert rel(trace, m.F_px_trace(x, z, p)) <= 1e-6
    assert rel((m.F_p(x, z + h, p) - m.F_p(x, z - h, p)) / (2 * h), fpz) <= 1e-6
    assert rel((m.F_z(x, z + h, p) - m.F_z(x, z - h, p)) / (2 * h), m.F_zz(x, z, p)) <= 1e-6


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_convexity_in_p_and_z(m):
    rng = np.random.default_rng(5)
    x, z, p = samples(rng, 200)
    assert np.linalg.eigvalsh(m.F_pp(x, z, p)).min() >= -1e-12
    h = 1e-3
    second = m.F(x, z + h, p) - 2 * m.F(x, z, p) + m.F(x, z - h, p)
    assert second.min() >= -1e-10


@pytest.mark.parametrize("m", MODELS, ids=IDS)
def test_growth_estimates_random(m):
    rng = np.random.default_rng(11)
    x, z, p = samples(rng, 2000, p_scale=2.0)
    env = m.envelopes
    az, ap = np.abs(z), np.linalg.norm(p, axis=-1)
    assert np.all(np.abs(m.F_z(x, z, p)) + np.abs(m.F_p(x, z, p)).max(-1) <= env.f0(az) * env.g0(ap))
    assert np.all(np.abs(m.F_px_trace(x, z, p)) <= 2 * env.f2(az) * env.g2(ap))
    assert np.all(np.abs(m.F_pz(x, z, p)).max(-1) <= env.f3(az) * env.g3(ap))


def test_weights():
    w = ConstantWeight(2.0)
    x = np.zeros((3, 2))
    assert np.all(w(x) == 2.0) and w.lipschitz == 0.0
    with pytest.raises(ValueError):
        ConstantWeight(-1.0)
    table = np.array([[0.0, 1.0], [2.0, 3.0]])
    b = BilinearWeight(table)
    assert b(np.array([[0.0, 0.0]]))[0] == pytest.approx(1.5)
    assert b(np.array([[-1.0, -1.0]]))[0] == pytest.approx(0.0)
    assert np.allclose(b.gradient(np.array([[0.2, 0.3]])), [[1.0, 0.5]])
    assert b(np.array([[5.0, 5.0]]))[0] == pytest.approx(3.0)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-10, 10, allow_nan=False))
def test_identity_pointwise_quadrature(x):
    pen = M.build_penalty(M.exp_lagrangian().envelopes)
    if abs(x) > pen.finite_range():
        return
    lhs = pen.dG_independent(np.array([x]))[0]
    rhs = 2 * x * pen.H(x * x)
    if np.isfinite(lhs):
        assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))
