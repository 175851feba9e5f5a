"""Penalised log-det barrier approximation of convexity-constrained minimisers.

Modules: geometry (domains, grid, lifted data), model (Lagrangians, growth
envelopes, penalty G), discrete (finite differences and J_eps), solver
(Newton, continuation, baseline, Euler-Lagrange residual), audit (runtime
checks) and cli (configuration, reports, subcommands).
"""
from .geometry import Disk, DomainSpec, Grid, QuadraticData, Square, build_grid, lifted_boundary
from .model import build_penalty, exp_lagrangian, quadratic_lagrangian, rochet_chone
from .solver import (EpsSchedule, NewtonConfig, abreu_residual, baseline_minimize, continuation_sweep,
                     feasible_start, newton_minimize)

__version__ = "0.1.0"
