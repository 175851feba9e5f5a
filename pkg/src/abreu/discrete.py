"""Finite-difference calculus on a Grid and the discrete penalized energy.

Fields are plain float arrays of shape ``grid.shape`` (or their row-major
flattening).  Difference operators are sparse matrices whose rows are the
interior nodes (in ``grid.interior_index`` order) and whose columns are all
nodes of the grid.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import OutOfDomain

# stencil offsets (di, dj, weight); scale applied afterwards
_STENCILS = {
    "d1": [(1, 0, 0.5), (-1, 0, -0.5)],
    "d2": [(0, 1, 0.5), (0, -1, -0.5)],
    "d11": [(1, 0, 1.0), (0, 0, -2.0), (-1, 0, 1.0)],
    "d22": [(0, 1, 1.0), (0, 0, -2.0), (0, -1, 1.0)],
    "d12": [(1, 1, 0.25), (1, -1, -0.25), (-1, 1, -0.25), (-1, -1, 0.25)],
}


@dataclass(frozen=True, eq=False)
class Operators:
    interior: np.ndarray      # flat node indices of the rows
    inner_rows: np.ndarray    # positions (into interior) of inner-domain nodes
    band_rows: np.ndarray     # positions of interior nodes outside the inner domain
    select: sp.csr_matrix     # row k picks node interior[k]
    d1: sp.csr_matrix
    d2: sp.csr_matrix
    d11: sp.csr_matrix
    d22: sp.csr_matrix
    d12: sp.csr_matrix


@lru_cache(maxsize=32)
def operators(grid):
    n = grid.n
    interior = grid.interior_index
    rows = np.arange(interior.size)
    i, j = np.divmod(interior, n)
    mats = {}
    for name, stencil in _STENCILS.items():
        scale = 1.0 / grid.h if name in ("d1", "d2") else 1.0 / grid.h ** 2
        r, c, v = [], [], []
        for di, dj, w in stencil:
            r.append(rows)
            c.append((i + di) * n + (j + dj))
            v.append(np.full(rows.size, w * scale))
        mats[name] = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                                   shape=(interior.size, grid.size))
    select = sp.csr_matrix((np.ones(rows.size), (rows, interior)), shape=(interior.size, grid.size))
    inner_flat = grid.mask_inner.ravel()[interior]
    return Operators(interior, np.flatnonzero(inner_flat), np.flatnonzero(~inner_flat), select, **mats)


def _flat(u):
    return np.asarray(u, dtype=float).ravel()


# ---------------------------------------------------------------- calculus


def gradient_h(grid, u):
    """Per-node gradient, shape (n, n, 2); NaN outside the domain.

    Central differences where both neighbours lie in the domain, one-sided
    differences on the Dirichlet layer where only one does.
    """
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    inside = grid.mask_inside
    out = np.full(grid.shape + (2,), np.nan)
    for axis in (0, 1):
        fwd = np.full(grid.shape, np.nan)
        bwd = np.full(grid.shape, np.nan)
        ok_f = np.zeros(grid.shape, dtype=bool)
        ok_b = np.zeros(grid.shape, dtype=bool)
        lead = [slice(None)] * 2
        lag = [slice(None)] * 2
        lead[axis], lag[axis] = slice(1, None), slice(None, -1)
        lead, lag = tuple(lead), tuple(lag)
        fwd[lag] = (u[lead] - u[lag]) / grid.h
        ok_f[lag] = inside[lead]
        bwd[lead] = (u[lead] - u[lag]) / grid.h
        ok_b[lead] = inside[lag]
        comp = np.where(ok_f & ok_b, 0.5 * (fwd + bwd), np.where(ok_f, fwd, np.where(ok_b, bwd, np.nan)))
        out[..., axis] = np.where(inside, comp, np.nan)
    return out


def cofactor2(a, b, c):
    """Cofactor of [[a, c], [c, b]] (vectorised), shape (..., 2, 2)."""
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    return np.stack([np.stack([b, -c], -1), np.stack([-c, a], -1)], -2)


@dataclass(frozen=True)
class HessianField:
    """Discrete Hessians at the interior nodes (``nodes`` are flat indices)."""

    nodes: np.ndarray
    d11: np.ndarray
    d22: np.ndarray
    d12: np.ndarray

    @property
    def matrix(self):
        return np.stack([np.stack([self.d11, self.d12], -1), np.stack([self.d12, self.d22], -1)], -2)

    @property
    def det(self):
        return self.d11 * self.d22 - self.d12 * self.d12

    @property
    def trace(self):
        return self.d11 + self.d22

    @property
    def cofactor(self):
        return cofactor2(self.d11, self.d22, self.d12)

    def min_eigenvalue(self):
        half = 0.5 * (self.d11 - self.d22)
        return 0.5 * self.trace - np.sqrt(half * half + self.d12 * self.d12)


def hessian_h(grid, u):
    ops = operators(grid)
    v = _flat(u)
    return HessianField(ops.interior, ops.d11 @ v, ops.d22 @ v, ops.d12 @ v)


def check_domain(hess):
    bad = (hess.det <= 0) | (hess.trace <= 0) | ~np.isfinite(hess.det)
    if bad.any():
        k = int(np.argmax(bad))
        raise OutOfDomain(hess.nodes[k], float(hess.det[k]))


# ---------------------------------------------------------------- barrier


def _logdet_derivatives(hess):
    """First and second derivatives of -log(d11 d22 - d12^2) in (d11, d22, d12)."""
    det = hess.det
    g = np.stack([hess.d22, hess.d11, -2 * hess.d12], -1) / det[:, None]
    m = np.zeros((3, 3))
    m[0, 1] = m[1, 0] = 1.0
    m[2, 2] = -2.0
    second = g[:, :, None] * g[:, None, :] - m[None] / det[:, None, None]
    return -g, second


def _block_quadratic(blocks, coeff):
    """sum_ab blocks[a]^T diag(coeff[:, a, b]) blocks[b]."""
    out = None
    for a, A in enumerate(blocks):
        for b, B in enumerate(blocks):
            c = coeff[:, a, b]
            if not np.any(c):
                continue
            term = A.T @ sp.diags(c) @ B
            out = term if out is None else out + term
    return out


def _restricted_hessian(grid, u, rows):
    ops = operators(grid)
    hess = hessian_h(grid, u)
    blocks = (ops.d11, ops.d22, ops.d12)
    if rows is not None:
        hess = HessianField(hess.nodes[rows], hess.d11[rows], hess.d22[rows], hess.d12[rows])
        blocks = tuple(B[rows] for B in blocks)
    check_domain(hess)
    return hess, blocks, grid.quad_weights.ravel()[hess.nodes]


def barrier(grid, u, eps, rows=None):
    """-eps * sum_w log det D2_h u over interior nodes.

    ``rows`` restricts the sum to a subset of the interior rows.  Returns
    ``(value, gradient, hessian_action)``; the gradient is a flat vector over
    all grid nodes and ``hessian_action`` a LinearOperator.
    """
    hess, blocks, w = _restricted_hessian(grid, u, rows)
    value = -eps * float(np.sum(w * np.log(hess.det)))
    first, second = _logdet_derivatives(hess)
    grad = eps * sum(B.T @ (w * first[:, a]) for a, B in enumerate(blocks))
    coeff = eps * w[:, None, None] * second

    def matvec(v):
        v = np.ravel(v)
        dv = np.stack([B @ v for B in blocks], -1)
        y = np.einsum("kab,kb->ka", coeff, dv)
        return sum(B.T @ y[:, a] for a, B in enumerate(blocks))

    action = LinearOperator((grid.size, grid.size), matvec=matvec, dtype=float)
    return value, grad, action


def barrier_hessian(grid, u, eps, rows=None):
    hess, blocks, w = _restricted_hessian(grid, u, rows)
    _, second = _logdet_derivatives(hess)
    return _block_quadratic(blocks, eps * w[:, None, None] * second)


# ---------------------------------------------------------------- energy terms


def _inner_state(grid, u):
    ops = operators(grid)
    v = _flat(u)
    rows = ops.inner_rows
    nodes = ops.interior[rows]
    x = np.stack([grid.x1.ravel()[nodes], grid.x2.ravel()[nodes]], -1)
    z = v[nodes]
    p = np.stack([(ops.d1 @ v)[rows], (ops.d2 @ v)[rows]], -1)
    return ops, rows, nodes, x, z, p


def lagrangian_term(grid, u, model):
    """Midpoint quadrature of F(x, u, D_h u) over the inner domain, with gradient."""
    ops, rows, nodes, x, z, p = _inner_state(grid, u)
    w = grid.quad_weights.ravel()[nodes]
    value = float(np.sum(w * model.F(x, z, p)))
    fp = model.F_p(x, z, p)
    grad = np.zeros(grid.size)
    np.add.at(grad, nodes, w * model.F_z(x, z, p))
    grad += ops.d1[rows].T @ (w * fp[:, 0]) + ops.d2[rows].T @ (w * fp[:, 1])
    return value, grad


def lagrangian_hessian(grid, u, model):
    ops, rows, nodes, x, z, p = _inner_state(grid, u)
    w = grid.quad_weights.ravel()[nodes]
    m = np.zeros((nodes.size, 3, 3))
    m[:, 0, 0] = model.F_zz(x, z, p)
    fpz = model.F_pz(x, z, p)
    m[:, 0, 1:] = fpz
    m[:, 1:, 0] = fpz
    m[:, 1:, 1:] = model.F_pp(x, z, p)
    blocks = (ops.select[rows], ops.d1[rows], ops.d2[rows])
    out = _block_quadratic(blocks, w[:, None, None] * m)
    return out if out is not None else sp.csr_matrix((grid.size, grid.size))


def plain_J(grid, u, model):
    return lagrangian_term(grid, u, model)[0]


def _band_state(grid, u, phi_eps):
    ops = operators(grid)
    nodes = ops.interior[ops.band_rows]
    d = _flat(u)[nodes] - _flat(phi_eps)[nodes]
    return nodes, d, grid.quad_weights.ravel()[nodes]


def penalty_term(grid, u, pen, phi_eps, eps):
    """(1/eps) * sum_w G(u - phi_eps) over interior nodes outside the inner domain."""
    nodes, d, w = _band_state(grid, u, phi_eps)
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(np.sum(w * pen.G(d))) / eps
    grad = np.zeros(grid.size)
    grad[nodes] = w * pen.dG(d) / eps
    return value, grad


def penalty_hessian(grid, u, pen, phi_eps, eps):
    nodes, d, w = _band_state(grid, u, phi_eps)
    diag = np.zeros(grid.size)
    diag[nodes] = w * pen.d2G(d) / eps
    return sp.diags(diag)


def penalty_quartic(grid, u, phi_eps):
    nodes, d, w = _band_state(grid, u, phi_eps)
    return float(np.sum(w * d ** 4))


def keyest_monitor(grid, u, pen, phi_eps, eps):
    """(1 / 2eps) * sum_w G'(u - phi_eps) (u - phi_eps) over the band."""
    nodes, d, w = _band_state(grid, u, phi_eps)
    return float(np.sum(w * pen.dG(d) * d)) / (2 * eps)


@dataclass(frozen=True)
class EnergyBreakdown:
    lagrangian_term: float
    penalty_term: float
    barrier_term: float

    @property
    def total(self):
        return self.lagrangian_term + self.penalty_term + self.barrier_term

    @property
    def J(self):
        return self.lagrangian_term


def assemble_Jeps(grid, u, model, pen, phi_eps, eps):
    """Discrete J_eps and its exact gradient (flat, over all nodes).

    The gradient with respect to pinned nodes is returned as well; callers
    restrict it to the free (interior) nodes.
    """
    b_val, b_grad, _ = barrier(grid, u, eps)
    f_val, f_grad = lagrangian_term(grid, u, model)
    g_val, g_grad = penalty_term(grid, u, pen, phi_eps, eps)
    return EnergyBreakdown(f_val, g_val, b_val), f_grad + g_grad + b_grad


def jeps_hessian(grid, u, model, pen, phi_eps, eps):
    return (barrier_hessian(grid, u, eps) + lagrangian_hessian(grid, u, model)
            + penalty_hessian(grid, u, pen, phi_eps, eps)).tocsr()
