"""Closed-form geometry of the hyperbolic plane in Iwasawa coordinates.

The plane carries the metric ``e^{-2 x2} dx1^2 + dx2^2``.  The same formulas
describe the target copy of the plane, with ``y2`` in place of ``x2``.  All
functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class DomainPoint:
    x1: float
    x2: float


@dataclass(frozen=True)
class TargetPoint:
    y1: float
    y2: float


@dataclass(frozen=True)
class TangentVector:
    """Components in the coordinate basis d/dy1, d/dy2."""

    v1: float
    v2: float

    def __add__(self, other):
        return TangentVector(self.v1 + other.v1, self.v2 + other.v2)

    def __mul__(self, c):
        return TangentVector(c * self.v1, c * self.v2)

    __rmul__ = __mul__


@dataclass(frozen=True)
class MetricData:
    """Inverse metric, volume weight and Christoffel symbols at a point.

    ``gamma[k, i, j]`` is the symbol with upper index ``k`` (0-based).
    """

    hinv11: np.ndarray
    hinv22: np.ndarray
    vol_weight: np.ndarray
    gamma: np.ndarray

    @property
    def gamma1_12(self):
        return self.gamma[0, 0, 1]

    @property
    def gamma2_11(self):
        return self.gamma[1, 0, 0]


def _metric_at(x2) -> MetricData:
    x2 = np.asarray(x2, dtype=float)
    gamma = np.zeros((2, 2, 2) + x2.shape)
    gamma[0, 0, 1] = -1.0
    gamma[0, 1, 0] = -1.0
    gamma[1, 0, 0] = np.exp(-2.0 * x2)
    return MetricData(
        hinv11=np.exp(2.0 * x2),
        hinv22=np.ones_like(x2),
        vol_weight=np.exp(-x2),
        gamma=gamma,
    )


def domain_metric(p: DomainPoint) -> MetricData:
    return _metric_at(p.x2)


def target_metric(y: TargetPoint) -> MetricData:
    return _metric_at(y.y2)


def target_inner(y: TargetPoint, v: TangentVector, w: TangentVector):
    """Riemannian inner product of two tangent vectors attached at ``y``."""
    return np.exp(-2.0 * np.asarray(y.y2)) * v.v1 * w.v1 + v.v2 * w.v2


def curvature_wedge(a: TangentVector, b: TangentVector, c: TangentVector,
                    y: TargetPoint) -> TangentVector:
    """``(a ^ b) c = <a, c> b - <b, c> a``, the curvature operator of the plane."""
    ac = target_inner(y, a, c)
    bc = target_inner(y, b, c)
    return TangentVector(ac * b.v1 - bc * a.v1, ac * b.v2 - bc * a.v2)


_SMALL_DISTANCE = 1e-6


def hyp_distance(p: DomainPoint, q: DomainPoint):
    """Geodesic distance between two points given in Iwasawa coordinates.

    Uses the half-plane formula written in a cancellation-free form,
    ``d = 2 asinh(sqrt(e^{-2m} dx1^2 / 4 + sinh^2(dx2 / 2)))`` with ``m`` the
    mean of the two ``x2`` values.  Below 1e-6 the first-order expansion is
    returned instead.
    """
    dx1 = np.asarray(p.x1, dtype=float) - np.asarray(q.x1, dtype=float)
    dx2 = np.asarray(p.x2, dtype=float) - np.asarray(q.x2, dtype=float)
    m = 0.5 * (np.asarray(p.x2, dtype=float) + np.asarray(q.x2, dtype=float))
    e = np.exp(-m)
    d = 2.0 * np.arcsinh(np.sqrt((0.5 * e * dx1) ** 2 + np.sinh(0.5 * dx2) ** 2))
    near = np.hypot(e * dx1, dx2)
    return np.where(near < _SMALL_DISTANCE, near, d)[()]


def disk_to_iwasawa(z) -> DomainPoint:
    """Poincare disk -> Iwasawa coordinates via the Cayley transform."""
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) >= 1.0):
        bad = np.flatnonzero(np.abs(np.ravel(z)) >= 1.0)[0]
        raise DomainError(f"point {np.ravel(z)[bad]} is not in the open unit disk")
    w = 1j * (1.0 + z) / (1.0 - z)
    return DomainPoint(w.real[()], np.log(w.imag)[()])


def iwasawa_to_disk(p: DomainPoint):
    w = np.asarray(p.x1, dtype=float) + 1j * np.exp(np.asarray(p.x2, dtype=float))
    return ((w - 1j) / (w + 1j))[()]


def disk_distance(z, w):
    """Distance for the disk metric ``4 |dz|^2 / (1 - |z|^2)^2``."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    return (2.0 * np.arctanh(np.abs((z - w) / (1.0 - np.conj(w) * z))))[()]


def frame_theta(y: TargetPoint):
    """Coordinate orthonormal frame ``(e^{y2} d/dy1, d/dy2)`` at ``y``."""
    y2 = np.asarray(y.y2, dtype=float)
    zero = np.zeros_like(y2)
    return TangentVector(np.exp(y2), zero), TangentVector(zero, np.ones_like(y2))


def transport_angle(p: TargetPoint, q: TargetPoint):
    """Angle of the parallel transport of ``frame_theta(p)`` to ``q`` along the geodesic.

    The transported frame is ``frame_theta(q)`` rotated by the returned angle
    ``beta``: ``E1 = cos(beta) Theta1 + sin(beta) Theta2``.  The connection
    form of the coordinate frame is ``e^{-y2} dy1``, and along a half-plane
    geodesic ``int dx / y = 2 atan(dx / (y_p + y_q))``.
    """
    d1 = np.asarray(q.y1, dtype=float) - np.asarray(p.y1, dtype=float)
    s = np.exp(np.asarray(p.y2, dtype=float)) + np.exp(np.asarray(q.y2, dtype=float))
    return (-2.0 * np.arctan(d1 / s))[()]
