"""Runtime checks of the identities, bounds and decay rates on solver output.

Every check returns an :class:`AuditOutcome` and is a pure function of its
inputs.
"""
from dataclasses import dataclass, field

import numpy as np

from . import discrete as D
from .errors import InsufficientData


@dataclass(frozen=True)
class AuditOutcome:
    name: str
    passed: bool
    measured: float
    threshold: float
    context: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured={self.measured:.6g} threshold={self.threshold:.6g}"


def _series(sweep, name):
    if hasattr(sweep, "reports"):
        return sweep.eps, sweep.column(name)
    eps, values = sweep
    return np.asarray(eps, dtype=float), np.asarray(values, dtype=float)


def check_G_identity(pen, samples, tol=1e-10):
    """max |G'(x) - 2x H(x^2)| / (1 + |G'(x)|), with G' taken from G itself.

    Samples at which either side overflows float64 are skipped and counted.
    """
    x = np.asarray(samples, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        rhs = 2 * x * pen.H(x * x)
        lhs = np.asarray(pen.dG_independent(x), dtype=float)
    ok = np.isfinite(rhs) & np.isfinite(lhs)
    err = np.abs(lhs[ok] - rhs[ok]) / (1 + np.abs(lhs[ok]))
    measured = float(err.max()) if err.size else float("nan")
    return AuditOutcome("G_identity", bool(err.size) and measured <= tol, measured, tol,
                        {"samples": int(x.size), "skipped_overflow": int((~ok).sum())})


def check_H_bounds(pen, samples):
    """H(t) >= t and G'(x) x >= 2 x^4 at every sample, without tolerance."""
    x = np.asarray(samples, dtype=float)
    t = x * x
    with np.errstate(over="ignore", invalid="ignore"):
        h = pen.H(t)
        lhs = pen.dG(x) * x
    rhs = 2 * t * t
    gap_h = h - t
    gap_g = lhs - rhs
    worst = float(min(gap_h.min(), gap_g.min()))
    return AuditOutcome("H_lower_bounds", bool((gap_h >= 0).all() and (gap_g >= 0).all()), worst, 0.0)


def check_envelopes(model, rng=None, n_samples=2000, z_scale=3.0, p_scale=2.0, x_bound=1.0):
    """Randomised check of the growth envelopes, tolerance 0.

    The optional Hessian envelope compares against a numerically computed
    eigenvalue, so that comparison alone gets a few ulps of relative slack.
    """
    rng = np.random.default_rng(rng)
    n = 2
    x = rng.uniform(-x_bound, x_bound, (n_samples, n)) / np.sqrt(2)
    z = rng.uniform(-z_scale, z_scale, n_samples)
    p = rng.uniform(-p_scale, p_scale, (n_samples, n))
    env = model.envelopes
    az, ap = np.abs(z), np.linalg.norm(p, axis=-1)
    lhs0 = np.abs(model.F_z(x, z, p)) + np.max(np.abs(model.F_p(x, z, p)), axis=-1)
    lhs2 = np.abs(model.F_px_trace(x, z, p))
    lhs3 = np.max(np.abs(model.F_pz(x, z, p)), axis=-1)
    margins = [
        env.f0(az) * env.g0(ap) - lhs0,
        n * env.f2(az) * env.g2(ap) - lhs2,
        env.f3(az) * env.g3(ap) - lhs3,
    ]
    if env.f1 is not None and env.g1 is not None:
        top = np.linalg.eigvalsh(model.F_pp(x, z, p))[:, -1]
        bound = env.f1(az) * env.g1(ap)
        margins.append(bound - top + 8 * np.finfo(float).eps * np.abs(top))
    worst = float(min(m.min() for m in margins))
    return AuditOutcome("growth_envelopes", worst >= 0, worst, 0.0, {"samples": n_samples})


def boundary_sup(grid, spec):
    """sup of phi over the Dirichlet layer (the discrete boundary)."""
    phi = grid.evaluate(spec.boundary_data)
    return float(phi[grid.mask_boundary].max()), float(np.abs(phi[grid.mask_boundary]).max())


def lower_bound_estimate(grid, spec):
    """Lower bound for u from convexity when u exceeds phi_eps - 1 somewhere in
    the inner domain: -(C1 + sup_bdry |phi|) / (dist(inner, bdry) / diam)."""
    phi = grid.evaluate(spec.boundary_data)
    rho = (((grid.x1 - spec.outer.center[0]) ** 2 + (grid.x2 - spec.outer.center[1]) ** 2
            - spec.outer.radius ** 2) / (2 * spec.outer.radius))
    inside = grid.mask_inside
    c1 = float(np.abs(phi[inside]).max() + np.abs(np.expm1(rho[inside])).max() + 1.0)
    ratio = grid.dist_inner_to_boundary() / (2 * spec.outer.radius)
    return -(c1 + boundary_sup(grid, spec)[1]) / ratio


def check_linfty(grid, u, spec, phi_eps=None, tol=1e-8):
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    top, _ = boundary_sup(grid, spec)
    lower = lower_bound_estimate(grid, spec)
    vals = u[grid.mask_inside]
    upper_excess = float(vals.max() - top)
    lower_excess = float(lower - vals.min())
    ctx = {"sup_boundary_phi": top, "lower_bound": lower, "max_u": float(vals.max()), "min_u": float(vals.min())}
    if phi_eps is not None:
        case1 = bool((u > np.asarray(phi_eps).reshape(grid.shape) - 1)[grid.mask_inner].any())
        ctx["case"] = 1 if case1 else 2
    passed = upper_excess <= tol and lower_excess <= 0
    return AuditOutcome("linfty_bound", passed, max(upper_excess, lower_excess), tol, ctx)


def cross_interface_mask(grid):
    """Interior nodes whose 3x3 stencil contains both inner and outer nodes."""
    inner = grid.mask_inner
    pad_in = np.pad(inner, 1)
    pad_out = np.pad(~inner & grid.mask_inside, 1)
    any_in = np.zeros_like(inner)
    any_out = np.zeros_like(inner)
    n = grid.n
    for di in (0, 1, 2):
        for dj in (0, 1, 2):
            any_in |= pad_in[di:di + n, dj:dj + n]
            any_out |= pad_out[di:di + n, dj:dj + n]
    return any_in & any_out & grid.mask_interior


def check_convexity(grid, u, nodes=None, tol=1e-8):
    """Smallest eigenvalue of D2_h u; ``nodes`` (bool mask) selects the nodes that decide pass/fail."""
    hess = D.hessian_h(grid, u)
    lam = np.full(grid.size, np.nan)
    lam[hess.nodes] = hess.min_eigenvalue()
    lam = lam.reshape(grid.shape)
    decide = grid.mask_interior if nodes is None else (np.asarray(nodes) & grid.mask_interior)
    measured = float(np.nanmin(lam[decide]))
    cross = cross_interface_mask(grid)
    ctx = {"min_eig_cross_interface": float(np.nanmin(lam[cross])) if cross.any() else float("nan"),
           "min_trace": float(hess.trace.min())}
    return AuditOutcome("convexity", measured >= -tol, measured, -tol, ctx)


def check_gradient_bound(grid, u, spec, slack_factor=10.0):
    """|D_h u| on the inner domain against (sup_bdry phi - min u) / dist(inner, bdry) + 10h."""
    u = np.asarray(u, dtype=float).reshape(grid.shape)
    grad = D.gradient_h(grid, u)
    norm = np.linalg.norm(grad[grid.mask_inner], axis=-1)
    top, _ = boundary_sup(grid, spec)
    bound = (top - u[grid.mask_inside].min()) / grid.dist_inner_to_boundary() + slack_factor * grid.h
    return AuditOutcome("gradient_bound", float(norm.max()) <= bound, float(norm.max()), float(bound))


def _slope(eps, values):
    return float(np.polyfit(np.log(eps), np.log(values), 1)[0])


def check_penalty_decay(sweep, min_slope=0.9):
    eps, values = _series(sweep, "penalty_quartic")
    if eps.size < 4:
        raise InsufficientData(f"penalty decay needs at least 4 sweep points, got {eps.size}")
    k = max(4, eps.size // 2)
    e, v = eps[-k:], values[-k:]
    if not (np.all(np.isfinite(v)) and np.all(v > 0)):
        return AuditOutcome("penalty_decay", False, float("nan"), min_slope, {"points": k})
    slope = _slope(e, v)
    return AuditOutcome("penalty_decay", slope >= min_slope, slope, min_slope, {"points": k})


def check_keyest_bounded(sweep, factor=1e3):
    eps, values = _series(sweep, "keyest_monitor")
    if eps.size < 2:
        raise InsufficientData(f"boundedness check needs at least 2 sweep points, got {eps.size}")
    first = values[int(np.argmax(eps))]
    peak = float(np.max(values)) if np.all(np.isfinite(values)) else float("inf")
    threshold = factor * first
    return AuditOutcome("keyest_bounded", bool(np.isfinite(peak) and peak <= threshold), peak, float(threshold))


def check_el_consistency(residual, grid, factor=10.0):
    """median |U:D2 w - f/eps| against factor * h * median |f| / eps."""
    threshold = factor * grid.h * residual.median_rhs
    return AuditOutcome("el_consistency", residual.median_residual <= threshold,
                        residual.median_residual, float(threshold), {"eps": residual.eps})
