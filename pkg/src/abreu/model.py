"""Lagrangians F(x, z, p), their growth envelopes, and the penalty pair (H, G).

All callbacks are vectorised: ``x`` and ``p`` have shape (m, n), ``z`` has
shape (m,).  Matrix-valued callbacks return (m, n, n).
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad_vec

from .errors import QuadratureFailure

REG_DELTA = 1e-8
QUAD_ABS_TOL = 1e-12
QUAD_REL_TOL = 1e-13


class Envelope:
    """A nonnegative nondecreasing function on [0, inf) with its derivative.

    Polynomial envelopes keep their coefficients so that the penalty can be
    integrated in closed form.
    """

    def __init__(self, func=None, deriv=None, poly=None, label=""):
        if poly is not None:
            poly = Polynomial(poly)
            func, deriv = poly, poly.deriv()
        self.poly = poly
        self._func = func
        self._deriv = deriv
        self.label = label or (str(list(poly.coef)) if poly is not None else "callable")

    @classmethod
    def polynomial(cls, *coef):
        return cls(poly=list(coef) or [0.0])

    @classmethod
    def constant(cls, value):
        return cls(poly=[float(value)])

    @classmethod
    def zero(cls):
        return cls(poly=[0.0])

    @property
    def is_polynomial(self):
        return self.poly is not None

    def __call__(self, t):
        return np.asarray(self._func(np.asarray(t, dtype=float)), dtype=float) * np.ones_like(t, dtype=float)

    def deriv(self, t):
        return np.asarray(self._deriv(np.asarray(t, dtype=float)), dtype=float) * np.ones_like(t, dtype=float)

    def __repr__(self):
        return f"Envelope({self.label})"


@dataclass(frozen=True)
class GrowthEnvelope:
    f0: Envelope
    g0: Envelope
    f2: Envelope
    g2: Envelope
    f3: Envelope
    g3: Envelope
    f1: Optional[Envelope] = None
    g1: Optional[Envelope] = None

    def pairs(self):
        """Envelopes that enter H, in the order (f0, g0), (f2, g2), (f3, g3)."""
        return [(self.f0, self.g0), (self.f2, self.g2), (self.f3, self.g3)]

    def all_envelopes(self):
        envs = [self.f0, self.g0, self.f2, self.g2, self.f3, self.g3]
        return envs + [e for e in (self.f1, self.g1) if e is not None]

    @property
    def is_polynomial(self):
        return all(e.is_polynomial for e in self.all_envelopes()[:6])


@dataclass(frozen=True, eq=False)
class LagrangianModel:
    name: str
    F: Callable
    F_z: Callable
    F_p: Callable
    F_pp: Callable
    F_px_trace: Callable
    F_pz: Callable
    envelopes: GrowthEnvelope
    F_zz: Callable = field(default=lambda x, z, p: np.zeros_like(z, dtype=float))
    params: dict = field(default_factory=dict)


# ---------------------------------------------------------------- weights


@dataclass(frozen=True)
class ConstantWeight:
    value: float = 1.0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("gamma must be nonnegative")

    def __call__(self, x):
        return np.full(np.shape(x)[:-1], float(self.value))

    def gradient(self, x):
        return np.zeros(np.shape(x), dtype=float)

    @property
    def sup(self):
        return float(self.value)

    @property
    def lipschitz(self):
        return 0.0


class BilinearWeight:
    """gamma given as a table on a uniform grid over [lo1, hi1] x [lo2, hi2].

    Values outside the table are clamped to the nearest edge cell.
    """

    def __init__(self, table, lo=(-1.0, -1.0), hi=(1.0, 1.0)):
        self.table = np.asarray(table, dtype=float)
        if self.table.ndim != 2 or min(self.table.shape) < 2:
            raise ValueError("gamma table must be 2-D with at least 2 points per axis")
        if (self.table < 0).any():
            raise ValueError("gamma must be nonnegative")
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.step = (self.hi - self.lo) / (np.array(self.table.shape) - 1)

    def _locate(self, x):
        s = (np.asarray(x, dtype=float) - self.lo) / self.step
        s = np.clip(s, 0.0, np.array(self.table.shape) - 1.0)
        i = np.minimum(np.floor(s).astype(int), np.array(self.table.shape) - 2)
        return i, s - i

    def __call__(self, x):
        i, t = self._locate(x)
        T = self.table
        a, b = i[..., 0], i[..., 1]
        u, v = t[..., 0], t[..., 1]
        return ((1 - u) * (1 - v) * T[a, b] + u * (1 - v) * T[a + 1, b]
                + (1 - u) * v * T[a, b + 1] + u * v * T[a + 1, b + 1])

    def gradient(self, x):
        i, t = self._locate(x)
        T = self.table
        a, b = i[..., 0], i[..., 1]
        u, v = t[..., 0], t[..., 1]
        d1 = ((1 - v) * (T[a + 1, b] - T[a, b]) + v * (T[a + 1, b + 1] - T[a, b + 1])) / self.step[0]
        d2 = ((1 - u) * (T[a, b + 1] - T[a, b]) + u * (T[a + 1, b + 1] - T[a + 1, b])) / self.step[1]
        return np.stack([d1, d2], axis=-1)

    @property
    def sup(self):
        return float(self.table.max())

    @property
    def lipschitz(self):
        d1 = np.abs(np.diff(self.table, axis=0)).max() / self.step[0]
        d2 = np.abs(np.diff(self.table, axis=1)).max() / self.step[1]
        return float(np.hypot(d1, d2))


# ---------------------------------------------------------------- models


def _power_envelope(coef, exponent, base):
    """base + coef * t**exponent, polynomial when the exponent is an integer."""
    if coef == 0:
        return Envelope.constant(base)
    if float(exponent).is_integer():
        c = np.zeros(int(exponent) + 1)
        c[0] += base
        c[int(exponent)] += coef
        return Envelope.polynomial(*c)
    return Envelope(lambda t: base + coef * t ** exponent,
                    lambda t: coef * exponent * t ** (exponent - 1),
                    label=f"{base}+{coef}t^{exponent}")


def rochet_chone(q, gamma=None, x_bound=1.0, delta=REG_DELTA):
    """F = (|p|^q / q - x.p + z) gamma(x).

    ``x_bound`` bounds |x| over the outer domain and enters the envelopes.
    For q != 2 the derivative callbacks use |p| ~ sqrt(|p|^2 + delta^2).
    """
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    gamma = ConstantWeight(1.0) if gamma is None else gamma
    q = float(q)

    def norm_reg(p):
        sq = np.sum(p * p, axis=-1)
        return np.sqrt(sq) if q == 2 else np.sqrt(sq + delta * delta)

    def F(x, z, p):
        r = np.sqrt(np.sum(p * p, axis=-1))
        return (r ** q / q - np.sum(x * p, axis=-1) + z) * gamma(x)

    def F_z(x, z, p):
        return gamma(x) * np.ones_like(z, dtype=float)

    def flux(p):
        return norm_reg(p)[..., None] ** (q - 2) * p

    def F_p(x, z, p):
        return gamma(x)[..., None] * (flux(p) - x)

    def F_pp(x, z, p):
        r = norm_reg(p)
        eye = np.eye(p.shape[-1])
        m = r[..., None, None] ** (q - 2) * eye
        if q != 2:
            m = m + (q - 2) * r[..., None, None] ** (q - 4) * p[..., :, None] * p[..., None, :]
        return gamma(x)[..., None, None] * m

    def F_px_trace(x, z, p):
        n = p.shape[-1]
        return np.sum(gamma.gradient(x) * (flux(p) - x), axis=-1) - n * gamma(x)

    def F_pz(x, z, p):
        return np.zeros_like(p, dtype=float)

    n = 2
    G_, L_, X = gamma.sup, gamma.lipschitz, float(x_bound)
    if q >= 2:
        g0 = _power_envelope(G_, q - 1, G_ * (1 + X))
        g2 = _power_envelope(L_, q - 1, n * G_ + L_ * X)
        if q == 2 or q >= 3:
            g1 = _power_envelope(G_ * (q - 1), q - 2, 0.0)
        else:
            g1 = Envelope.polynomial(G_ * (q - 1), G_ * (q - 1))
    else:
        g0 = Envelope.polynomial(G_ * (2 + X), G_)
        g2 = Envelope.polynomial(n * G_ + L_ * (X + 1), L_)
        g1 = Envelope.constant(G_ * delta ** (q - 2))
    env = GrowthEnvelope(
        f0=Envelope.polynomial(1.0, 1.0), g0=g0,
        f2=Envelope.constant(1.0), g2=g2,
        f3=Envelope.zero(), g3=Envelope.zero(),
        f1=Envelope.constant(1.0), g1=g1,
    )
    return LagrangianModel("rochet_chone", F, F_z, F_p, F_pp, F_px_trace, F_pz, env,
                           params={"q": q, "gamma": gamma})


def exp_lagrangian():
    """F = exp(|p|^2): derivatives grow faster than any polynomial."""

    def F(x, z, p):
        return np.exp(np.sum(p * p, axis=-1))

    def F_z(x, z, p):
        return np.zeros_like(z, dtype=float)

    def F_p(x, z, p):
        return 2 * p * F(x, z, p)[..., None]

    def F_pp(x, z, p):
        eye = np.eye(p.shape[-1])
        return F(x, z, p)[..., None, None] * (2 * eye + 4 * p[..., :, None] * p[..., None, :])

    def zero_scalar(x, z, p):
        return np.zeros_like(z, dtype=float)

    def zero_vector(x, z, p):
        return np.zeros_like(p, dtype=float)

    env = GrowthEnvelope(
        f0=Envelope.constant(1.0),
        g0=Envelope(lambda t: 2 * (1 + t) * np.exp(t * t),
                    lambda t: 2 * (1 + 2 * t + 2 * t * t) * np.exp(t * t), label="2(1+t)e^{t^2}"),
        f2=Envelope.zero(), g2=Envelope.zero(),
        f3=Envelope.zero(), g3=Envelope.zero(),
        f1=Envelope.constant(1.0),
        g1=Envelope(lambda t: (2 + 4 * t * t) * np.exp(t * t),
                    lambda t: (12 * t + 8 * t ** 3) * np.exp(t * t), label="(2+4t^2)e^{t^2}"),
    )
    return LagrangianModel("exp", F, F_z, F_p, F_pp, zero_scalar, zero_vector, env)


def quadratic_lagrangian():
    """F = |p|^2 / 2."""

    def F(x, z, p):
        return 0.5 * np.sum(p * p, axis=-1)

    def F_pp(x, z, p):
        return np.broadcast_to(np.eye(p.shape[-1]), p.shape + (p.shape[-1],)).copy()

    env = GrowthEnvelope(
        f0=Envelope.constant(1.0), g0=Envelope.polynomial(0.0, 1.0),
        f2=Envelope.zero(), g2=Envelope.zero(),
        f3=Envelope.zero(), g3=Envelope.zero(),
        f1=Envelope.constant(1.0), g1=Envelope.constant(1.0),
    )
    return LagrangianModel(
        "quadratic_test", F,
        lambda x, z, p: np.zeros_like(z, dtype=float),
        lambda x, z, p: np.array(p, dtype=float),
        F_pp,
        lambda x, z, p: np.zeros_like(z, dtype=float),
        lambda x, z, p: np.zeros_like(p, dtype=float),
        env,
    )


# ---------------------------------------------------------------- penalty


class PenaltyG:
    """H(t) = t (1 + f0 g0 + f2 g2 + t f3 g3) and G(x) = int_0^{x^2} H(t) dt."""

    def __init__(self, env):
        self.env = env
        self.closed_form = env.is_polynomial
        if self.closed_form:
            t = Polynomial([0.0, 1.0])
            (f0, g0), (f2, g2), (f3, g3) = [(a.poly, b.poly) for a, b in env.pairs()]
            self.H_poly = t * (1 + f0 * g0 + f2 * g2 + t * f3 * g3)
            antider = self.H_poly.integ()
            coef = np.zeros(2 * len(antider.coef) - 1)
            coef[::2] = antider.coef
            self.G_poly = Polynomial(coef)
            self._dG_poly = self.G_poly.deriv()

    def H(self, t):
        t = np.asarray(t, dtype=float)
        (f0, g0), (f2, g2), (f3, g3) = self.env.pairs()
        with np.errstate(over="ignore", invalid="ignore"):
            return t * (1 + f0(t) * g0(t) + f2(t) * g2(t) + t * f3(t) * g3(t))

    def dH(self, t):
        t = np.asarray(t, dtype=float)
        (f0, g0), (f2, g2), (f3, g3) = self.env.pairs()
        with np.errstate(over="ignore", invalid="ignore"):
            s0, s2, s3 = f0(t) * g0(t), f2(t) * g2(t), f3(t) * g3(t)
            ds0 = f0.deriv(t) * g0(t) + f0(t) * g0.deriv(t)
            ds2 = f2.deriv(t) * g2(t) + f2(t) * g2.deriv(t)
            ds3 = f3.deriv(t) * g3(t) + f3(t) * g3.deriv(t)
            return 1 + s0 + s2 + 2 * t * s3 + t * (ds0 + ds2 + t * ds3)

    def G(self, x):
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            return self.G_poly(x)
        return self._quadrature(lambda s, xx: xx * xx * self.H(s * xx * xx), x)

    def dG(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * x * self.H(x * x)

    def d2G(self, x):
        x = np.asarray(x, dtype=float)
        t = x * x
        return 2 * self.H(t) + 4 * t * self.dH(t)

    def dG_independent(self, x):
        """G' obtained from the representation of G itself, not from H(x^2).

        Closed form: derivative of the polynomial G.  Otherwise:
        differentiate x^2 int_0^1 H(s x^2) ds under the integral sign.
        """
        x = np.asarray(x, dtype=float)
        if self.closed_form:
            return self._dG_poly(x)
        return self._quadrature(
            lambda s, xx: 2 * xx * self.H(s * xx * xx) + 2 * s * xx ** 3 * self.dH(s * xx * xx), x)

    def _quadrature(self, integrand, x):
        """int_0^1 integrand(s, x) ds per component of x.

        Each component is scaled by 1 + |integrand(1, x)| (the integrands are
        monotone in s) so one vector quadrature meets the tolerance relative
        to every component's own size.  Components whose integrand overflows
        are returned as inf.
        """
        shape = x.shape
        flat = x.ravel()
        out = np.full(flat.shape, np.inf)
        with np.errstate(over="ignore", invalid="ignore"):
            top = integrand(1.0, flat)
        finite = np.isfinite(top)
        xs = flat[finite]
        if xs.size:
            scale = 1.0 + np.abs(top[finite])
            with np.errstate(over="ignore", invalid="ignore"):
                val, err = quad_vec(lambda s: integrand(s, xs) / scale, 0.0, 1.0,
                                    epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, norm="max")
            if not np.all(np.isfinite(val)) or err > 10 * QUAD_ABS_TOL:
                raise QuadratureFailure(f"quadrature error estimate {err:g} above tolerance")
            out[finite] = val * scale
        out = out.reshape(shape)
        return out if shape else float(out)

    def finite_range(self, limit=10.0):
        """Largest |x| <= limit for which H(x^2) is finite in float64."""
        if np.isfinite(self.H(limit * limit)):
            return limit
        lo, hi = 0.0, limit
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if np.isfinite(self.H(mid * mid)) and np.isfinite(self.dH(mid * mid)):
                lo = mid
            else:
                hi = mid
        return lo


def build_penalty(env):
    return PenaltyG(env)
