"""Structured grids over Iwasawa coordinates and finite-difference calculus.

Scalar fields are numpy arrays of shape ``(n2, n1)``: axis 0 runs over
``x2`` and axis 1 over ``x1``, so a C-ordered ravel is row-major with ``x1``
fastest.  Leading batch axes are allowed by every stencil routine.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, NonFiniteError

MIN_NODES = 5


@dataclass(frozen=True)
class Grid:
    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.n1 < MIN_NODES or self.n2 < MIN_NODES:
            raise ConfigError(f"grid needs at least {MIN_NODES} nodes per axis, "
                              f"got n1={self.n1}, n2={self.n2}")
        if not (self.x1_max > self.x1_min and self.x2_max > self.x2_min):
            raise ConfigError("grid extents must be positive")

    @property
    def shape(self):
        return (self.n2, self.n1)

    @property
    def size(self):
        return self.n1 * self.n2

    @property
    def dx1(self):
        return (self.x1_max - self.x1_min) / (self.n1 - 1)

    @property
    def dx2(self):
        return (self.x2_max - self.x2_min) / (self.n2 - 1)

    @cached_property
    def x1(self):
        return np.linspace(self.x1_min, self.x1_max, self.n1)

    @cached_property
    def x2(self):
        return np.linspace(self.x2_min, self.x2_max, self.n2)

    @cached_property
    def X1(self):
        return np.broadcast_to(self.x1[None, :], self.shape)

    @cached_property
    def X2(self):
        return np.broadcast_to(self.x2[:, None], self.shape)

    @cached_property
    def h(self):
        """``e^{2 x2}`` per grid row."""
        return np.exp(2.0 * self.x2)

    @cached_property
    def hinv11(self):
        """``e^{2 x2}`` as a column, broadcastable against fields."""
        return self.h[:, None]

    @cached_property
    def boundary_mask(self):
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        return m

    @cached_property
    def interior_mask(self):
        return ~self.boundary_mask

    @cached_property
    def vol_weights(self):
        """Per-node hyperbolic cell volume ``e^{-x2} dx1 dx2``."""
        return np.exp(-self.X2) * self.dx1 * self.dx2

    @cached_property
    def quad_weights(self):
        """Trapezoid-rule weights: ``vol_weights`` halved on edges, quartered at corners."""
        t1 = np.ones(self.n1)
        t1[[0, -1]] = 0.5
        t2 = np.ones(self.n2)
        t2[[0, -1]] = 0.5
        return self.vol_weights * t2[:, None] * t1[None, :]

    def center_distance(self, c1=0.0, c2=0.0):
        return np.hypot(self.X1 - c1, self.X2 - c2)


def build_grid(x1_extent, x2_extent, n1, n2) -> Grid:
    """Symmetric rectangle ``[-x1_extent, x1_extent] x [-x2_extent, x2_extent]``."""
    if not (x1_extent > 0 and x2_extent > 0):
        raise ConfigError(f"extents must be positive, got {x1_extent}, {x2_extent}")
    return Grid(-float(x1_extent), float(x1_extent), -float(x2_extent),
                float(x2_extent), int(n1), int(n2))


def check_finite(f, name="field", grid: Grid | None = None):
    """Raise NonFiniteError naming the first offending node."""
    f = np.asarray(f)
    if np.all(np.isfinite(f)):
        return f
    idx = np.unravel_index(np.flatnonzero(~np.isfinite(f))[0], f.shape)
    where = f"node {tuple(int(i) for i in idx)}"
    if grid is not None and len(idx) >= 2:
        j, i = idx[-2], idx[-1]
        where += f" (x1={grid.x1[i]:.6g}, x2={grid.x2[j]:.6g})"
    raise NonFiniteError(f"{name} is not finite at {where}: {f[idx]}")


@dataclass
class MapField:
    """A map into the plane sampled on a grid, stored as target coordinates.

    ``reference`` is the map the field is anchored to on the boundary layer.
    """

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    reference: "MapField | None" = field(default=None, repr=False)

    def __post_init__(self):
        self.u1 = check_finite(np.asarray(self.u1, dtype=float), "u1", self.grid)
        self.u2 = check_finite(np.asarray(self.u2, dtype=float), "u2", self.grid)

    def copy(self):
        return MapField(self.grid, self.u1.copy(), self.u2.copy(), self.reference)

    def stacked(self):
        return np.stack([self.u1, self.u2])


@dataclass
class VectorField:
    """Sections of the pullback bundle, components in the target coordinate basis."""

    grid: Grid
    v1: np.ndarray
    v2: np.ndarray


def gradient(grid: Grid, f):
    """``(d1 f, d2 f)``: central differences inside, one-sided 2nd order on the edges."""
    d2, d1 = np.gradient(f, grid.dx2, grid.dx1, axis=(-2, -1), edge_order=2)
    return d1, d2


def second_derivatives(grid: Grid, f):
    """Interior ``(d11 f, d22 f, d12 f)`` by 3-point stencils; zero on the boundary layer."""
    f = np.asarray(f, dtype=float)
    d11 = np.zeros_like(f)
    d22 = np.zeros_like(f)
    d12 = np.zeros_like(f)
    c = f[..., 1:-1, 1:-1]
    d11[..., 1:-1, 1:-1] = (f[..., 1:-1, 2:] - 2.0 * c + f[..., 1:-1, :-2]) / grid.dx1**2
    d22[..., 1:-1, 1:-1] = (f[..., 2:, 1:-1] - 2.0 * c + f[..., :-2, 1:-1]) / grid.dx2**2
    d12[..., 1:-1, 1:-1] = (f[..., 2:, 2:] - f[..., 2:, :-2] - f[..., :-2, 2:]
                            + f[..., :-2, :-2]) / (4.0 * grid.dx1 * grid.dx2)
    return d11, d22, d12


def interior_derivatives(grid: Grid, f):
    """Central first and pure second differences on interior nodes only.

    Returns ``(d1, d2, d11, d22)``, each of shape ``(..., n2 - 2, n1 - 2)``.
    """
    c = f[..., 1:-1, 1:-1]
    e = f[..., 1:-1, 2:]
    w = f[..., 1:-1, :-2]
    n = f[..., 2:, 1:-1]
    s = f[..., :-2, 1:-1]
    d1 = (e - w) * (0.5 / grid.dx1)
    d2 = (n - s) * (0.5 / grid.dx2)
    d11 = (e - 2.0 * c + w) * (1.0 / grid.dx1**2)
    d22 = (n - 2.0 * c + s) * (1.0 / grid.dx2**2)
    return d1, d2, d11, d22


def laplace_beltrami(grid: Grid, f):
    """``e^{2 x2} d11 f + d22 f - d2 f`` on interior nodes, 0 on the boundary layer."""
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    d1, d2, d11, d22 = interior_derivatives(grid, f)
    out[..., 1:-1, 1:-1] = grid.hinv11[1:-1] * d11 + d22 - d2
    return out


def _pairwise_sum(a):
    # numpy reduces contiguous 1-D float arrays pairwise in index order
    return float(np.add.reduce(np.ascontiguousarray(a, dtype=float).ravel()))


def integrate_volume(grid: Grid, f):
    """Trapezoid-rule approximation of ``int f dvol`` over the rectangle.

    Fields used as residuals vanish on the boundary layer, in which case this
    equals the plain sum of ``f * vol_weights`` over interior nodes.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim > 2:
        w = grid.quad_weights
        return np.array([_pairwise_sum(fi * w) for fi in f.reshape((-1,) + grid.shape)]
                        ).reshape(f.shape[:-2])
    return _pairwise_sum(f * grid.quad_weights)


def norm(grid: Grid, f, p=2):
    """Volume L2 norm (``p=2``) or sup norm (``p=inf``, boundary nodes included)."""
    if p == 2:
        return float(np.sqrt(max(integrate_volume(grid, np.square(f)), 0.0)))
    if p in (np.inf, "inf", "infinity"):
        return float(np.max(np.abs(f)))
    raise ConfigError(f"unsupported norm p={p!r}; use 2 or inf")
