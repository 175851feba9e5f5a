"""Damped Newton minimisation of the discrete J_eps, eps-continuation, the
hard-constrained baseline and the Euler-Lagrange (Abreu system) residual."""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import discrete as D
from .errors import LineSearchStall, MaxIters, OutOfDomain, SolverError, StartFailure
from .geometry import DefiningFunction, compact_subset_mask, lifted_boundary

log = logging.getLogger(__name__)

MIN_STEP = 1e-14


@dataclass(frozen=True)
class NewtonConfig:
    tol_grad: float = 1e-8
    max_iters: int = 200
    armijo: float = 1e-4
    backtrack: float = 0.5
    cg_tol: float = 1e-10
    cg_max: int = 2000
    linear_solver: str = "direct"

    def __post_init__(self):
        for name in ("tol_grad", "max_iters", "armijo", "cg_tol", "cg_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError("linear_solver must be 'direct' or 'cg'")


@dataclass(frozen=True)
class EpsSchedule:
    eps0: float = 2.0 ** -4
    ratio: float = 0.5
    count: int = 8

    def __post_init__(self):
        if not 0 < self.eps0 < 1:
            raise ValueError("eps0 must lie in (0, 1)")
        if not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1)")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("count must be a positive integer")

    @property
    def values(self):
        return [self.eps0 * self.ratio ** k for k in range(int(self.count))]


@dataclass
class SolveReport:
    eps: float
    iters: int
    final_grad_norm: float
    energy: D.EnergyBreakdown
    min_det: float
    linfty_u: float
    penalty_quartic: float = float("nan")
    keyest_monitor: float = float("nan")
    el_residual: float = float("nan")
    el_rhs_scale: float = float("nan")
    err_K_vs_baseline: float = float("nan")
    err_K_vs_reference: float = float("nan")
    wall_time: float = 0.0
    energy_history: List[float] = field(default_factory=list)


@dataclass
class SweepReport:
    reports: List[SolveReport]
    fields: List[np.ndarray]
    baseline: Optional[np.ndarray] = None

    @property
    def eps(self):
        return np.array([r.eps for r in self.reports])

    @property
    def total_iters(self):
        return sum(r.iters for r in self.reports)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.reports], dtype=float)


@dataclass
class AbreuResidual:
    w: np.ndarray             # full grid, psi on the Dirichlet layer
    lma_residual: np.ndarray  # interior nodes
    f_eps: np.ndarray         # interior nodes
    nodes: np.ndarray
    eps: float

    @property
    def median_residual(self):
        return float(np.median(np.abs(self.lma_residual)))

    @property
    def median_rhs(self):
        return float(np.median(np.abs(self.f_eps))) / self.eps


# ---------------------------------------------------------------- objectives


class PenalizedObjective:
    """J_eps on a fixed grid; free variables are the interior nodes."""

    def __init__(self, grid, model, pen, phi_eps, eps):
        self.grid, self.model, self.pen, self.phi_eps, self.eps = grid, model, pen, phi_eps, eps
        self.free = grid.interior_index

    def value(self, u):
        with np.errstate(over="ignore", invalid="ignore"):
            return D.assemble_Jeps(self.grid, u, self.model, self.pen, self.phi_eps, self.eps)[0].total

    def value_and_grad(self, u):
        return D.assemble_Jeps(self.grid, u, self.model, self.pen, self.phi_eps, self.eps)

    def hessian(self, u):
        return D.jeps_hessian(self.grid, u, self.model, self.pen, self.phi_eps, self.eps)


class BaselineObjective:
    """plain J + mu * barrier restricted to the inner-domain nodes, which are
    the only free variables."""

    def __init__(self, grid, model, mu):
        self.grid, self.model, self.mu = grid, model, mu
        self.rows = D.operators(grid).inner_rows
        self.free = grid.inner_index

    def value(self, u):
        with np.errstate(over="ignore", invalid="ignore"):
            return self.value_and_grad(u)[0].total

    def value_and_grad(self, u):
        b_val, b_grad, _ = D.barrier(self.grid, u, self.mu, rows=self.rows)
        f_val, f_grad = D.lagrangian_term(self.grid, u, self.model)
        return D.EnergyBreakdown(f_val, 0.0, b_val), f_grad + b_grad

    def hessian(self, u):
        return (D.barrier_hessian(self.grid, u, self.mu, rows=self.rows)
                + D.lagrangian_hessian(self.grid, u, self.model)).tocsr()


def _newton_direction(H, g, cfg):
    if cfg.linear_solver == "cg":
        p, info = spla.cg(H, -g, rtol=cfg.cg_tol, maxiter=cfg.cg_max)
        if info != 0:
            log.warning("CG did not converge (info=%d); using steepest descent", info)
            return -g
    else:
        p = spla.spsolve(H.tocsc(), -g)
    if not np.all(np.isfinite(p)) or g @ p >= 0:
        log.warning("Newton direction is not a descent direction; using steepest descent")
        return -g
    return p


def _minimize(obj, u0, cfg):
    """Damped Newton with feasibility-first backtracking and Armijo."""
    u = np.asarray(u0, dtype=float).ravel().copy()
    free = obj.free
    history = []
    it = 0
    while True:
        energy, grad = obj.value_and_grad(u)
        g = grad[free]
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        history.append(energy.total)
        if gnorm <= cfg.tol_grad:
            return u, energy, gnorm, it, history
        if it >= cfg.max_iters:
            raise MaxIters(f"no convergence after {it} iterations (|grad|={gnorm:.3e})")
        H = obj.hessian(u)[free][:, free]
        p = _newton_direction(H, g, cfg)
        slope = float(g @ p)
        slack = 1e-13 * (1.0 + abs(energy.total))
        t = 1.0
        while True:
            if t < MIN_STEP:
                raise LineSearchStall(f"step fell below {MIN_STEP} at iteration {it} (|grad|={gnorm:.3e})")
            trial = u.copy()
            trial[free] += t * p
            try:
                val = obj.value(trial)
            except OutOfDomain:
                t *= cfg.backtrack
                continue
            if np.isfinite(val) and val <= energy.total + cfg.armijo * t * slope + slack:
                break
            t *= cfg.backtrack
        u = trial
        it += 1


# ---------------------------------------------------------------- operations


def feasible_start(grid, spec, min_det=1e-3):
    """phi + alpha (|x - c|^2 - R^2) on interior nodes, phi on the Dirichlet layer."""
    c, R = spec.outer.center, spec.outer.radius
    phi = grid.evaluate(spec.boundary_data)
    bump = (grid.x1 - c[0]) ** 2 + (grid.x2 - c[1]) ** 2 - R * R
    for alpha in np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 41)]):
        u = np.where(grid.mask_interior, phi + alpha * bump, phi)
        hess = D.hessian_h(grid, u)
        if hess.det.min() >= min_det and hess.trace.min() > 0:
            return u
    raise StartFailure("no alpha in [1e-3, 10] yields a strictly convex start")


def lifted_field(grid, spec, eps):
    rho = DefiningFunction.for_disk(spec.outer)
    return grid.evaluate(lifted_boundary(spec, rho, eps, dim=2))


def newton_minimize(grid, u0, eps, model, pen, phi_eps, cfg=None):
    cfg = cfg or NewtonConfig()
    start = time.perf_counter()
    D.check_domain(D.hessian_h(grid, u0))
    obj = PenalizedObjective(grid, model, pen, phi_eps, eps)
    try:
        u, energy, gnorm, iters, history = _minimize(obj, u0, cfg)
    except SolverError as exc:
        exc.eps = eps
        raise
    u = u.reshape(grid.shape)
    hess = D.hessian_h(grid, u)
    report = SolveReport(
        eps=eps, iters=iters, final_grad_norm=gnorm, energy=energy,
        min_det=float(hess.det.min()),
        linfty_u=float(np.max(np.abs(u[grid.mask_inside]))),
        penalty_quartic=D.penalty_quartic(grid, u, phi_eps),
        keyest_monitor=D.keyest_monitor(grid, u, pen, phi_eps, eps),
        energy_history=history,
    )
    report.wall_time = time.perf_counter() - start
    return u, report


def baseline_minimize(grid, spec, model, mu_schedule=None, cfg=None):
    """Minimise plain J over discretely convex fields equal to phi off the inner domain."""
    cfg = cfg or NewtonConfig()
    mu_schedule = list(mu_schedule) if mu_schedule is not None else [10.0 ** -k for k in range(7)]
    phi = grid.evaluate(spec.boundary_data)
    u = phi.copy()
    rows = D.operators(grid).inner_rows
    bump = (grid.x1 - spec.outer.center[0]) ** 2 + (grid.x2 - spec.outer.center[1]) ** 2 - spec.outer.radius ** 2
    for alpha in np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 41)]):
        u = np.where(grid.mask_inner, phi + alpha * bump, phi)
        hess = D.hessian_h(grid, u)
        if hess.det[rows].min() >= 1e-3 and hess.trace[rows].min() > 0:
            break
    else:
        raise StartFailure("no strictly convex start for the baseline")
    u = u.ravel()
    for mu in mu_schedule:
        obj = BaselineObjective(grid, model, mu)
        try:
            u = _minimize(obj, u, cfg)[0]
        except SolverError as exc:
            exc.eps = mu
            raise
        log.debug("baseline mu=%g J=%.10g", mu, D.plain_J(grid, u, model))
    return u.reshape(grid.shape)


def abreu_residual(grid, u, eps, model, pen, phi_eps, psi=1.0):
    """Residual of U^{ij} D_ij w - f_eps / eps with w = 1/det D2_h u."""
    ops = D.operators(grid)
    hess = D.hessian_h(grid, u)
    D.check_domain(hess)
    w = np.where(grid.mask_inside, np.broadcast_to(psi, grid.shape), np.nan).astype(float)
    w.ravel()[ops.interior] = 1.0 / hess.det
    wv = np.nan_to_num(w.ravel())
    w11, w22, w12 = ops.d11 @ wv, ops.d22 @ wv, ops.d12 @ wv
    lw = hess.d22 * w11 + hess.d11 * w22 - 2 * hess.d12 * w12

    uf = np.asarray(u, dtype=float).ravel()
    f = np.empty(ops.interior.size)
    rows = ops.inner_rows
    nodes = ops.interior[rows]
    x = np.stack([grid.x1.ravel()[nodes], grid.x2.ravel()[nodes]], -1)
    z = uf[nodes]
    p = np.stack([(ops.d1 @ uf)[rows], (ops.d2 @ uf)[rows]], -1)
    hm = hess.matrix[rows]
    div = (model.F_px_trace(x, z, p) + np.sum(model.F_pz(x, z, p) * p, -1)
           + np.einsum("kij,kij->k", model.F_pp(x, z, p), hm))
    f[rows] = model.F_z(x, z, p) - div
    band = ops.band_rows
    bnodes = ops.interior[band]
    f[band] = pen.dG(uf[bnodes] - np.asarray(phi_eps).ravel()[bnodes]) / eps
    return AbreuResidual(w, lw - f / eps, f, ops.interior, eps)


def _warm_start(grid, spec, u_prev):
    try:
        D.check_domain(D.hessian_h(grid, u_prev))
        return u_prev
    except OutOfDomain:
        u_feas = feasible_start(grid, spec)
        for theta in (0.25, 0.5, 0.75, 1.0):
            u = (1 - theta) * u_prev + theta * u_feas
            try:
                D.check_domain(D.hessian_h(grid, u))
                log.info("warm start blended with feasible start (theta=%g)", theta)
                return u
            except OutOfDomain:
                continue
        return u_feas


def continuation_sweep(grid, spec, model, pen, schedule=None, cfg=None, baseline=None,
                       reference=None, margin=0.25, psi=1.0, warm=True, u0=None):
    """Solve for eps_0 > eps_1 > ... warm-starting each solve from the last."""
    schedule = schedule or EpsSchedule()
    K = compact_subset_mask(grid, margin)
    reports, fields = [], []
    u = feasible_start(grid, spec) if u0 is None else np.asarray(u0, dtype=float)
    for eps in schedule.values:
        phi_eps = lifted_field(grid, spec, eps)
        start = _warm_start(grid, spec, u) if warm else feasible_start(grid, spec)
        u, rep = newton_minimize(grid, start, eps, model, pen, phi_eps, cfg)
        res = abreu_residual(grid, u, eps, model, pen, phi_eps, psi)
        rep.el_residual = res.median_residual
        rep.el_rhs_scale = res.median_rhs
        if baseline is not None:
            rep.err_K_vs_baseline = float(np.max(np.abs(u - baseline)[K]))
        if reference is not None:
            rep.err_K_vs_reference = float(np.max(np.abs(u - reference)[K]))
        log.info("eps=%.6g iters=%d J_eps=%.10g err_K=%.3e", eps, rep.iters, rep.energy.total,
                 rep.err_K_vs_baseline)
        reports.append(rep)
        fields.append(u)
    return SweepReport(reports, fields, baseline)
