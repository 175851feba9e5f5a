"""Domains, the masked Cartesian grid, the defining function and lifted data."""
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, ResolutionTooCoarse

MIN_NODES = 9


@dataclass(frozen=True)
class Disk:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def inside_distance(self, x1, x2):
        """Distance to the circle, positive inside."""
        return self.radius - np.hypot(x1 - self.center[0], x2 - self.center[1])

    def contains(self, x1, x2):
        return self.inside_distance(x1, x2) > 0

    def extremes(self):
        c, r = self.center, self.radius
        return c[0] - r, c[0] + r, c[1] - r, c[1] + r


@dataclass(frozen=True)
class Square:
    """Axis-aligned square given by its center and half side length."""

    center: tuple = (0.0, 0.0)
    half_width: float = 0.5

    def inside_distance(self, x1, x2):
        return self.half_width - np.maximum(np.abs(x1 - self.center[0]), np.abs(x2 - self.center[1]))

    def contains(self, x1, x2):
        return self.inside_distance(x1, x2) > 0

    def corners(self):
        c, a = self.center, self.half_width
        return [(c[0] + s1 * a, c[1] + s2 * a) for s1 in (-1, 1) for s2 in (-1, 1)]


@dataclass(frozen=True)
class QuadraticData:
    """phi(x) = 1/2 x^T A x + b.x + c, convex when A is positive semidefinite."""

    A: tuple = ((1.0, 0.0), (0.0, 1.0))
    b: tuple = (0.0, 0.0)
    c: float = 0.0

    def __call__(self, x1, x2):
        (a11, a12), (a21, a22) = self.A
        return (0.5 * (a11 * x1 * x1 + (a12 + a21) * x1 * x2 + a22 * x2 * x2)
                + self.b[0] * x1 + self.b[1] * x2 + self.c)

    def gradient(self, x1, x2):
        (a11, a12), (a21, a22) = self.A
        s12 = 0.5 * (a12 + a21)
        return np.stack([a11 * x1 + s12 * x2 + self.b[0], s12 * x1 + a22 * x2 + self.b[1]], axis=-1)

    def hessian(self, x1, x2):
        (a11, a12), (a21, a22) = self.A
        s12 = 0.5 * (a12 + a21)
        H = np.array([[a11, s12], [s12, a22]], dtype=float)
        return np.broadcast_to(H, np.shape(x1) + (2, 2))


@dataclass(frozen=True)
class DomainSpec:
    outer: Disk = field(default_factory=Disk)
    inner: object = field(default_factory=lambda: Disk(radius=0.5))
    boundary_data: object = field(default_factory=QuadraticData)

    def __post_init__(self):
        if not isinstance(self.outer, Disk):
            raise TypeError("outer domain must be a Disk")
        if self.containment_margin() <= 0:
            raise ValueError("inner domain must lie strictly inside the outer disk")

    def containment_margin(self):
        """dist(inner, boundary of outer), computed from the shapes."""
        o = self.outer
        if isinstance(self.inner, Disk):
            off = np.hypot(self.inner.center[0] - o.center[0], self.inner.center[1] - o.center[1])
            return o.radius - off - self.inner.radius
        if isinstance(self.inner, Square):
            return min(float(o.inside_distance(*p)) for p in self.inner.corners())
        raise TypeError(f"unsupported inner shape {type(self.inner).__name__}")


@dataclass(frozen=True)
class DefiningFunction:
    """rho(x) = (|x - c|^2 - R^2) / (2R) for the disk of radius R about c."""

    center: tuple
    radius: float

    @classmethod
    def for_disk(cls, disk):
        return cls(tuple(disk.center), float(disk.radius))

    def __call__(self, x1, x2):
        r2 = (x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2
        return (r2 - self.radius ** 2) / (2 * self.radius)

    def gradient(self, x1, x2):
        return np.stack([(x1 - self.center[0]) / self.radius, (x2 - self.center[1]) / self.radius], axis=-1)

    def hessian(self, x1, x2):
        return np.broadcast_to(np.eye(2) / self.radius, np.shape(x1) + (2, 2))


@dataclass(frozen=True, eq=False)
class Grid:
    """Masked Cartesian grid on the bounding box of the outer disk.

    Arrays are (n, n) with ``indexing='ij'``: axis 0 runs along x1, axis 1
    along x2, flattening is row-major.
    """

    n: int
    h: float
    x1: np.ndarray
    x2: np.ndarray
    mask_inside: np.ndarray
    mask_interior: np.ndarray
    mask_boundary: np.ndarray
    mask_inner: np.ndarray
    quad_weights: np.ndarray
    spec: DomainSpec

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def size(self):
        return self.n * self.n

    @property
    def interior_index(self):
        return np.flatnonzero(self.mask_interior)

    @property
    def inner_index(self):
        return np.flatnonzero(self.mask_inner)

    @property
    def mask_outer_band(self):
        """Interior nodes outside the inner domain (where the penalty acts)."""
        return self.mask_interior & ~self.mask_inner

    def inside_distance(self):
        return self.spec.outer.inside_distance(self.x1, self.x2)

    def dist_inner_to_boundary(self):
        """Smallest distance from a node of the inner domain to the outer circle."""
        return float(self.inside_distance()[self.mask_inner].min())

    def evaluate(self, func):
        return np.asarray(func(self.x1, self.x2), dtype=float)


def _neighbours_inside(inside):
    ok = np.zeros_like(inside)
    core = inside[1:-1, 1:-1].copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            core &= inside[1 + di:inside.shape[0] - 1 + di, 1 + dj:inside.shape[1] - 1 + dj]
    ok[1:-1, 1:-1] = core
    return ok


def build_grid(spec, n_per_axis):
    if int(n_per_axis) != n_per_axis or n_per_axis < MIN_NODES:
        raise ValueError(f"n_per_axis must be an integer >= {MIN_NODES}, got {n_per_axis}")
    n = int(n_per_axis)
    lo1, hi1, lo2, hi2 = spec.outer.extremes()
    h = (hi1 - lo1) / (n - 1)
    x1, x2 = np.meshgrid(lo1 + h * np.arange(n), lo2 + h * np.arange(n), indexing="ij")

    inside = spec.outer.contains(x1, x2)
    interior = _neighbours_inside(inside)
    boundary = inside & ~interior
    inner = spec.inner.contains(x1, x2)

    if not inner.any():
        raise ResolutionTooCoarse("no grid node falls inside the inner domain")
    if (inner & ~interior).any():
        raise ResolutionTooCoarse("inner domain reaches the Dirichlet layer; refine the grid")

    hess = spec.boundary_data.hessian(x1[inside], x2[inside])
    if np.linalg.eigvalsh(hess).min() < -1e-12:
        raise ValueError("boundary data is not convex on the grid")

    weights = np.where(inside, h * h, 0.0)
    for a in (x1, x2, inside, interior, boundary, inner, weights):
        a.setflags(write=False)
    return Grid(n, h, x1, x2, inside, interior, boundary, inner, weights, spec)


def lifted_boundary(spec, rho, eps, dim=2):
    """Return x -> phi(x) + eps**(1/(3 n^2)) * (exp(rho(x)) - 1)."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if dim < 2:
        raise ValueError("dimension must be at least 2")
    lift = eps ** (1.0 / (3 * dim * dim))
    phi = spec.boundary_data

    def phi_eps(x1, x2):
        return phi(x1, x2) + lift * np.expm1(rho(x1, x2))

    return phi_eps


def compact_subset_mask(grid, margin):
    """Nodes at distance >= margin from the outer boundary."""
    if margin < 2 * grid.h - 1e-12:
        raise ValueError(f"margin must be at least 2h = {2 * grid.h}")
    if margin >= grid.spec.outer.radius:
        raise EmptyMask(f"margin {margin} leaves no set with interior inside the disk")
    mask = grid.mask_inside & (grid.inside_distance() >= margin - 1e-12)
    if not mask.any():
        raise EmptyMask(f"no node lies at distance >= {margin} from the boundary")
    return mask
