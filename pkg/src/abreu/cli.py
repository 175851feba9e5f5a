"""Command line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
4 at least one enabled audit failed.
"""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import audit as A
from . import discrete as D
from . import report as R
from . import solver as S
from .config import parse_config
from .errors import (AbreuError, EmptyMask, InsufficientData, ParseError, ResolutionTooCoarse,
                     SolverError, ValidationError)
from .geometry import build_grid, compact_subset_mask
from .model import build_penalty

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4
G_SAMPLES = np.linspace(-10.0, 10.0, 1000)

log = logging.getLogger("abreu")


class Problem:
    """Everything derived from a RunConfig that the subcommands share."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.spec = cfg.domain()
        self.grid = build_grid(self.spec, cfg.n)
        self.model = cfg.build_model()
        self.pen = build_penalty(self.model.envelopes)
        self.K = compact_subset_mask(self.grid, cfg.margin)
        self.out = cfg.output_dir()
        self.out.mkdir(parents=True, exist_ok=True)

    def reference(self):
        """Closed-form constrained minimiser, known for the quadratic test only."""
        if self.cfg.model != "quadratic_test" or self.cfg.inner_shape != "disk":
            return None
        r0 = self.cfg.inner_radius
        half_sq = 0.5 * (self.grid.x1 ** 2 + self.grid.x2 ** 2)
        return np.maximum(half_sq, 0.5 * r0 * r0)


def field_name(k):
    return f"field_eps_{k:02d}.csv"


def run_audits(prob, eps_list, fields, baseline=None):
    """Every enabled audit on the given converged fields (recomputed from them)."""
    cfg, grid, spec = prob.cfg, prob.grid, prob.spec
    enabled = set(cfg.audits)
    out = []
    if "G_identity" in enabled:
        out.append(A.check_G_identity(prob.pen, G_SAMPLES))
    if "H_lower_bounds" in enabled:
        out.append(A.check_H_bounds(prob.pen, G_SAMPLES))
    if "growth_envelopes" in enabled:
        out.append(A.check_envelopes(prob.model, rng=cfg.seed, x_bound=cfg.outer_radius))

    quartic, monitor = [], []
    for eps, u in zip(eps_list, fields):
        phi_eps = S.lifted_field(grid, spec, eps)
        quartic.append(D.penalty_quartic(grid, u, phi_eps))
        monitor.append(D.keyest_monitor(grid, u, prob.pen, phi_eps, eps))
        tagged = []
        if "linfty_bound" in enabled:
            tagged.append(A.check_linfty(grid, u, spec, phi_eps))
        if "convexity" in enabled:
            tagged.append(A.check_convexity(grid, u))
        if "gradient_bound" in enabled:
            tagged.append(A.check_gradient_bound(grid, u, spec, cfg.gradient_slack))
        if "el_consistency" in enabled:
            res = S.abreu_residual(grid, u, eps, prob.model, prob.pen, phi_eps, cfg.psi)
            tagged.append(A.check_el_consistency(res, grid, cfg.el_factor))
        for o in tagged:
            o.context["eps"] = float(eps)
        out.extend(tagged)
    series = (np.asarray(eps_list, dtype=float), np.asarray(quartic), np.asarray(monitor))
    for name, fn, vals, arg in (("penalty_decay", A.check_penalty_decay, series[1], cfg.penalty_slope),
                                ("keyest_bounded", A.check_keyest_bounded, series[2], cfg.keyest_factor)):
        if name not in enabled:
            continue
        try:
            out.append(fn((series[0], vals), arg))
        except InsufficientData as exc:
            log.warning("%s skipped: %s", name, exc)
    if baseline is not None and "convexity" in enabled:
        o = A.check_convexity(grid, baseline, nodes=grid.mask_inner)
        out.append(A.AuditOutcome("convexity_baseline", o.passed, o.measured, o.threshold, o.context))
    for o in out:
        o.context.setdefault("n", grid.n)
    return out


def _finish_audits(prob, outcomes):
    R.write_audit_csv(prob.out / "audit.csv", outcomes)
    R.write_audit_json(prob.out / "audit.json", outcomes)
    for o in outcomes:
        print(o.line())
    failed = [o.name for o in outcomes if not o.passed]
    if failed:
        log.error("audits failed: %s", ", ".join(sorted(set(failed))))
        return EXIT_AUDIT
    return EXIT_OK


def _sweep(prob, schedule, baseline=None):
    return S.continuation_sweep(prob.grid, prob.spec, prob.model, prob.pen, schedule,
                                prob.cfg.newton(), baseline=baseline, reference=prob.reference(),
                                margin=prob.cfg.margin, psi=prob.cfg.psi)


def _dump_sweep(prob, sweep):
    R.write_sweep_csv(prob.out / "sweep.csv", sweep, timing=bool(prob.cfg.timing))
    for k, u in enumerate(sweep.fields):
        R.write_field_csv(prob.out / field_name(k), prob.grid, u)


def run_sweep(cfg):
    prob = Problem(cfg)
    baseline = S.baseline_minimize(prob.grid, prob.spec, prob.model, cfg=cfg.newton())
    R.write_field_csv(prob.out / "baseline.csv", prob.grid, baseline)
    sweep = _sweep(prob, cfg.schedule(), baseline)
    _dump_sweep(prob, sweep)
    table = R.read_sweep_csv(prob.out / "sweep.csv")
    R.write_figures(prob.out, sweep.fields[-1], table, prob.grid)
    return _finish_audits(prob, run_audits(prob, list(sweep.eps), sweep.fields, baseline))


def run_solve(cfg, eps=None):
    """Single solve at ``eps`` (default eps0), warm-started through the
    schedule values above it."""
    prob = Problem(cfg)
    sched = cfg.schedule()
    target = sched.eps0 if eps is None else float(eps)
    if not 0 < target < 1:
        raise ValidationError("eps", "must lie in (0, 1)")
    ladder = [e for e in sched.values if e > target] + [target]
    u = None
    for e in ladder:
        sweep = S.continuation_sweep(prob.grid, prob.spec, prob.model, prob.pen, S.EpsSchedule(e, 0.5, 1),
                                     cfg.newton(), reference=prob.reference(), margin=cfg.margin,
                                     psi=cfg.psi, u0=u)
        u = sweep.fields[-1]
    R.write_sweep_csv(prob.out / "solve.csv", sweep, timing=bool(cfg.timing))
    R.write_field_csv(prob.out / "solution.csv", prob.grid, sweep.fields[-1])
    rep = sweep.reports[-1]
    print(f"eps={rep.eps:.6g} iters={rep.iters} J_eps={rep.energy.total:.12g} "
          f"J={rep.energy.J:.12g} min_det={rep.min_det:.4g}")
    return EXIT_OK


def run_baseline(cfg):
    prob = Problem(cfg)
    u = S.baseline_minimize(prob.grid, prob.spec, prob.model, cfg=cfg.newton())
    R.write_field_csv(prob.out / "baseline.csv", prob.grid, u)
    J = D.plain_J(prob.grid, u, prob.model)
    o = A.check_convexity(prob.grid, u, nodes=prob.grid.mask_inner)
    ref = prob.reference()
    extra = "" if ref is None else f" err_K_vs_closed_form={np.max(np.abs(u - ref)[prob.K]):.6g}"
    print(f"J={J:.12g} min_eig_free={o.measured:.6g}{extra}")
    return EXIT_OK


def run_audit(cfg, input_dir):
    prob = Problem(cfg)
    src = Path(input_dir)
    try:
        table = R.read_sweep_csv(src / "sweep.csv")
        fields = [R.read_field_csv(src / field_name(k), prob.grid) for k in range(len(table["eps"]))]
        base_path = src / "baseline.csv"
        baseline = R.read_field_csv(base_path, prob.grid) if base_path.exists() else None
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"cannot read sweep output from {src}: {exc}") from None
    return _finish_audits(prob, run_audits(prob, list(table["eps"]), fields, baseline))


def run_report(input_dir, output_dir=None):
    src = Path(input_dir)
    try:
        table = R.read_sweep_csv(src / "sweep.csv")
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"cannot read {src / 'sweep.csv'}: {exc}") from None
    last = src / field_name(len(table["eps"]) - 1)
    field = None
    if last.exists():
        rows = R.read_csv(last)
        n = max(int(r["i"]) for r in rows) + 1
        field = np.full((n, n), np.nan)
        for r in rows:
            field[int(r["i"]), int(r["j"])] = float(r["u"])
    out = Path(output_dir) if output_dir else src
    out.mkdir(parents=True, exist_ok=True)
    for p in R.write_figures(out, field, table):
        print(p)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="abreu", description=(
        "Penalised log-det barrier solver for convexity-constrained variational problems."))
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="single solve at one eps")
    p.add_argument("--config", required=True)
    p.add_argument("--eps", type=float)
    for name, text in (("sweep", "baseline, eps-continuation, audits, CSV and SVG"),
                       ("baseline", "hard-constrained baseline only")):
        sub.add_parser(name, help=text).add_argument("--config", required=True)
    p = sub.add_parser("audit", help="rerun audits on a previous sweep output")
    p.add_argument("--config", required=True)
    p.add_argument("--input", required=True)
    p = sub.add_parser("report", help="regenerate SVG figures from sweep output")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return run_report(args.input, args.output)
        cfg = parse_config(args.config)
        if args.command == "solve":
            return run_solve(cfg, args.eps)
        if args.command == "sweep":
            return run_sweep(cfg)
        if args.command == "baseline":
            return run_baseline(cfg)
        return run_audit(cfg, args.input)
    except (ParseError, ValidationError, ResolutionTooCoarse, EmptyMask, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure at eps={getattr(exc, 'eps', None)}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AbreuError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
