"""Run configuration: a versioned, line-based ``key = value`` format.

Blank lines and ``#`` comments are ignored.  Every key is optional except
``model``; unknown keys are rejected.  See README for the schema.
"""
import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import Disk, DomainSpec, Square
from .model import BilinearWeight, ConstantWeight, exp_lagrangian, quadratic_lagrangian, rochet_chone
from .solver import EpsSchedule, NewtonConfig

SCHEMA_VERSION = 1
OUTPUT_ENV = "ABREU_OUTPUT_DIR"
MODELS = ("quadratic_test", "rochet_chone", "exp")
AUDITS = ("G_identity", "H_lower_bounds", "growth_envelopes", "linfty_bound", "convexity",
          "gradient_bound", "penalty_decay", "keyest_bounded", "el_consistency")
DEFAULT_AUDITS = tuple(a for a in AUDITS if a != "el_consistency")


@dataclass(frozen=True)
class RunConfig:
    model: str
    schema: int = SCHEMA_VERSION
    q: float = 2.0
    gamma: float = 1.0
    gamma_table: str = ""
    outer_radius: float = 1.0
    inner_shape: str = "disk"
    inner_radius: float = 0.5
    n: int = 33
    eps0: float = 2.0 ** -4
    ratio: float = 0.5
    count: int = 8
    tol_grad: float = 1e-8
    max_iters: int = 200
    linear_solver: str = "direct"
    margin: float = 0.25
    psi: float = 1.0
    seed: int = 0
    timing: int = 1
    output: str = "out"
    audits: tuple = DEFAULT_AUDITS
    penalty_slope: float = 0.9
    keyest_factor: float = 1e3
    el_factor: float = 10.0
    gradient_slack: float = 10.0
    source_dir: str = field(default=".", compare=False)

    # ---------------------------------------------------------- builders

    def domain(self):
        inner = (Disk(radius=self.inner_radius) if self.inner_shape == "disk"
                 else Square(half_width=self.inner_radius))
        return DomainSpec(outer=Disk(radius=self.outer_radius), inner=inner)

    def build_model(self):
        if self.model == "quadratic_test":
            return quadratic_lagrangian()
        if self.model == "exp":
            return exp_lagrangian()
        if self.gamma_table:
            path = Path(self.gamma_table)
            if not path.is_absolute():
                path = Path(self.source_dir) / path
            R = self.outer_radius
            weight = BilinearWeight(np.loadtxt(path, delimiter=","), (-R, -R), (R, R))
        else:
            weight = ConstantWeight(self.gamma)
        return rochet_chone(self.q, weight, x_bound=self.outer_radius)

    def schedule(self):
        return EpsSchedule(self.eps0, self.ratio, self.count)

    def newton(self):
        return NewtonConfig(tol_grad=self.tol_grad, max_iters=self.max_iters,
                            linear_solver=self.linear_solver)

    def output_dir(self):
        return Path(os.environ.get(OUTPUT_ENV) or self.output)

    def echo(self):
        lines = [f"# effective configuration (schema {self.schema})"]
        for f in dataclasses.fields(self):
            if f.name == "source_dir":
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "source_dir"}
_INT_KEYS = {"schema", "n", "count", "max_iters", "seed", "timing"}
_STR_KEYS = {"model", "gamma_table", "inner_shape", "linear_solver", "output"}


def _convert(key, raw, lineno):
    if key in _STR_KEYS:
        return raw
    if key == "audits":
        names = tuple(s.strip() for s in raw.split(",") if s.strip())
        bad = [s for s in names if s not in AUDITS]
        if bad:
            raise ValidationError(key, f"unknown audit(s) {bad}; choose from {list(AUDITS)}")
        return names
    try:
        if key in _INT_KEYS:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return float(raw)
    except ValueError:
        raise ParseError(f"cannot read {raw!r} as a number", line=lineno, key=key) from None


def _check(cfg):
    def need(ok, key, msg):
        if not ok:
            raise ValidationError(key, msg)

    need(cfg.schema == SCHEMA_VERSION, "schema", f"only schema {SCHEMA_VERSION} is supported")
    need(cfg.model in MODELS, "model", f"must be one of {list(MODELS)}")
    need(cfg.q > 1 and math.isfinite(cfg.q), "q", "must satisfy 1 < q < inf")
    need(cfg.gamma >= 0, "gamma", "must be >= 0")
    need(cfg.outer_radius > 0, "outer_radius", "must be > 0")
    need(cfg.inner_shape in ("disk", "square"), "inner_shape", "must be 'disk' or 'square'")
    limit = cfg.outer_radius if cfg.inner_shape == "disk" else cfg.outer_radius / math.sqrt(2)
    need(0 < cfg.inner_radius < limit, "inner_radius", f"must lie in (0, {limit:g})")
    need(cfg.n >= 9, "n", "must be an integer >= 9")
    need(0 < cfg.eps0 < 1, "eps0", "must lie in (0, 1)")
    need(0 < cfg.ratio < 1, "ratio", "must lie in (0, 1)")
    need(cfg.count >= 1, "count", "must be >= 1")
    need(cfg.tol_grad > 0, "tol_grad", "must be > 0")
    need(cfg.max_iters >= 1, "max_iters", "must be >= 1")
    need(cfg.linear_solver in ("direct", "cg"), "linear_solver", "must be 'direct' or 'cg'")
    need(cfg.margin > 0, "margin", "must be > 0")
    need(cfg.psi > 0, "psi", "must be > 0")
    need(cfg.timing in (0, 1), "timing", "must be 0 or 1")
    for key in ("penalty_slope", "keyest_factor", "el_factor", "gradient_slack"):
        need(getattr(cfg, key) > 0, key, "must be > 0")


def parse_config_text(text, source_dir="."):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected 'key = value'", line=lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ParseError(f"unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line=lineno, key=key)
        values[key] = _convert(key, raw, lineno)
    if "model" not in values:
        raise ParseError("missing required key 'model'", key="model")
    cfg = RunConfig(source_dir=str(source_dir), **values)
    _check(cfg)
    return cfg


def parse_config(path, echo=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config_text(text, source_dir=path.parent)
    if echo:
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.txt").write_text(cfg.echo(), encoding="utf-8")
    return cfg
