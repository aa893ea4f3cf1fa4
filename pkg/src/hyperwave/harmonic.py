"""Harmonic maps built from holomorphic disk maps, tension fields and energies."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, InvalidSpecError
from .geometry import DomainPoint, disk_to_iwasawa, hyp_distance, iwasawa_to_disk
from .grid import Grid, MapField, VectorField, check_finite, gradient, integrate_volume

DEFAULT_RHO = 0.5


@dataclass(frozen=True)
class HolomorphicSpec:
    """Polynomial ``f(z) = sum c_k z^k`` scaled by ``mu``."""

    coeffs: tuple
    mu: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(complex(c) for c in self.coeffs))
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"scale mu must lie in [0, 1], got {self.mu}")
        # radius exactly 1 is the identity-like boundary case: it still maps the
        # open disk into itself, which is all construct_admissible needs
        if self.image_radius() > 1.0 + 1e-12:
            raise InvalidSpecError(
                f"mu*f maps the closed disk onto radius {self.image_radius():.6g} > 1")

    @property
    def admissible(self):
        """Image of the closed disk strictly inside the open disk."""
        return self.image_radius() < 1.0

    @classmethod
    def from_json(cls, d):
        coeffs = [complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
                  for c in d["coeffs"]]
        return cls(tuple(coeffs), float(d["mu"]))

    def to_json(self):
        return {"coeffs": [[c.real, c.imag] for c in self.coeffs], "mu": self.mu}

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        # Horner, highest degree first
        acc = np.zeros_like(z)
        for c in reversed(self.coeffs):
            acc = acc * z + c
        return self.mu * acc

    def image_radius(self, samples=4096):
        """``max |mu f|`` on the unit circle (the closed-disk max by the maximum principle)."""
        if not self.coeffs:
            return 0.0
        z = np.exp(2j * np.pi * np.arange(samples) / samples)
        return float(np.max(np.abs(self(z))))


@dataclass
class HarmonicMapReport:
    R0: float
    sup_weighted_dQ: float
    dQ_l2: float
    grad_dQ_l2: float
    grad2_dQ_l2: float
    tension_sup: float
    rho: float = DEFAULT_RHO
    sup_weighted_attained_interior: bool = True

    def to_dict(self):
        return asdict(self)


def construct_admissible(spec: HolomorphicSpec, grid: Grid) -> MapField:
    """Sample ``Q = disk_to_iwasawa(mu f(iwasawa_to_disk(p)))`` at every node."""
    z = iwasawa_to_disk(DomainPoint(grid.X1, grid.X2))
    w = spec(z)
    if np.any(np.abs(w) >= 1.0):
        raise InvalidSpecError("image of the grid escapes the unit disk")
    q = disk_to_iwasawa(w)
    Q = MapField(grid, np.array(q.x1, dtype=float), np.array(q.x2, dtype=float))
    Q.reference = Q
    return Q


def constant_map(grid: Grid, y1=0.0, y2=0.0) -> MapField:
    Q = MapField(grid, np.full(grid.shape, float(y1)), np.full(grid.shape, float(y2)))
    Q.reference = Q
    return Q


def identity_map(grid: Grid) -> MapField:
    Q = MapField(grid, np.array(grid.X1), np.array(grid.X2))
    Q.reference = Q
    return Q


def tension_arrays(grid: Grid, u1, u2):
    """Tension components ``(tau1, tau2)`` on the full grid, zero on the boundary layer."""
    u1 = np.ascontiguousarray(u1, dtype=float)
    u2 = np.ascontiguousarray(u2, dtype=float)
    t1 = np.zeros(u1.shape)
    t2 = np.zeros(u1.shape)
    _kernels.tension_into(u1, u2, grid.h, grid.dx1, grid.dx2, t1, t2)
    return t1, t2


def tension_field(u: MapField) -> VectorField:
    """Tension field of ``u`` with the boundary layer set to zero.

    In components (``h^{11} = e^{2 x2}``, ``h^{22} = 1``)::

        tau^1 = lap u^1 - 2 h^{ii} d_i u^1 d_i u^2
        tau^2 = lap u^2 + e^{-2 u^2} h^{ii} (d_i u^1)^2
    """
    g = u.grid
    t1, t2 = tension_arrays(g, u.u1, u.u2)
    check_finite(t1, "tension", g)
    check_finite(t2, "tension", g)
    return VectorField(g, t1, t2)


def energy_density_arrays(grid: Grid, u1, u2):
    out = np.empty(grid.shape)
    _kernels.energy_density_into(np.ascontiguousarray(u1, dtype=float),
                                 np.ascontiguousarray(u2, dtype=float),
                                 grid.h, grid.dx1, grid.dx2, out)
    return out


def energy_density(u: MapField):
    """``|du|^2 = e^{2 x2}(e^{-2 u2} (d1 u1)^2 + (d1 u2)^2) + e^{-2 u2} (d2 u1)^2 + (d2 u2)^2``."""
    return energy_density_arrays(u.grid, u.u1, u.u2)


def dirichlet_energy(u: MapField) -> float:
    return 0.5 * integrate_volume(u.grid, energy_density(u))


def _covariant_hessian(grid: Grid, u1, u2):
    """``(nabla du)^k_ij`` as an array indexed ``[k, i, j]``."""
    du = np.array([gradient(grid, u1), gradient(grid, u2)])  # [k, i]
    ddu = np.empty((2, 2, 2) + grid.shape)
    for k in range(2):
        for i in range(2):
            ddu[k, i] = np.array(gradient(grid, du[k, i]))
    ddu = 0.5 * (ddu + ddu.transpose(0, 2, 1, 3, 4))
    e2x = np.exp(-2.0 * grid.X2)
    e2u = np.exp(-2.0 * u2)
    H = ddu.copy()
    # domain Christoffels: G^1_12 = G^1_21 = -1, G^2_11 = e^{-2 x2}
    for k in range(2):
        H[k, 0, 1] += du[k, 0]
        H[k, 1, 0] += du[k, 0]
        H[k, 0, 0] -= e2x * du[k, 1]
    # target Christoffels: G^1_12 = G^1_21 = -1, G^2_11 = e^{-2 u2}
    for i in range(2):
        for j in range(2):
            H[0, i, j] -= du[0, i] * du[1, j] + du[1, i] * du[0, j]
            H[1, i, j] += e2u * du[0, i] * du[0, j]
    return H


def admissibility_report(Q: MapField, rho=DEFAULT_RHO) -> HarmonicMapReport:
    """Image radius, weighted decay of ``|dQ|`` and ``L2`` norms of ``nabla^k dQ``."""
    if not rho > 0:
        raise ConfigError(f"rho must be positive, got {rho}")
    g = Q.grid
    R0 = float(np.max(hyp_distance(DomainPoint(Q.u1, Q.u2), DomainPoint(0.0, 0.0))))
    dens = energy_density(Q)
    r = hyp_distance(DomainPoint(g.X1, g.X2), DomainPoint(0.0, 0.0))
    weighted = np.exp(rho * r) * np.sqrt(dens)
    at = np.unravel_index(np.argmax(weighted), g.shape)

    H = _covariant_hessian(g, Q.u1, Q.u2)
    hdiag = np.array([np.broadcast_to(g.hinv11, g.shape), np.ones(g.shape)])
    gdiag = np.array([np.exp(-2.0 * Q.u2), np.ones(g.shape)])
    c2 = gdiag[:, None, None] * hdiag[None, :, None] * hdiag[None, None, :]
    h1 = np.sum(c2 * H**2, axis=(0, 1, 2))
    dH = np.empty((2,) + H.shape)
    for k in range(2):
        for i in range(2):
            for j in range(2):
                dH[:, k, i, j] = np.array(gradient(g, H[k, i, j]))
    h2 = np.sum(hdiag[:, None, None, None] * c2[None] * dH**2, axis=(0, 1, 2, 3))

    t = tension_field(Q)
    return HarmonicMapReport(
        R0=R0,
        sup_weighted_dQ=float(weighted[at]),
        dQ_l2=float(np.sqrt(integrate_volume(g, dens))),
        grad_dQ_l2=float(np.sqrt(integrate_volume(g, h1))),
        grad2_dQ_l2=float(np.sqrt(integrate_volume(g, h2))),
        tension_sup=float(max(np.max(np.abs(t.v1)), np.max(np.abs(t.v2)))),
        rho=float(rho),
        sup_weighted_attained_interior=bool(g.interior_mask[at]),
    )
