"""Caloric gauge: frames transported along the heat flow, differential fields,
connection scalars and the identities linking them.

Frames are arrays ``E[j, p, n2, n1]``: component ``p`` (target coordinate
basis) of frame vector ``e_{j+1}``.  Frame components of a vector ``X`` are
``phi^j = <X, e_j>``.  Each skew connection matrix is stored as the single
scalar ``a = <nabla e_2, e_1> = -<nabla e_1, e_2>``, so ``D = d + A`` acts on
frame components by ``(D phi)^1 = d phi^1 + a phi^2`` and
``(D phi)^2 = d phi^2 - a phi^1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GaugeError, HyperwaveError
from .geometry import DomainPoint, TargetPoint, hyp_distance, transport_angle
from .grid import Grid, MapField, gradient, integrate_volume, laplace_beltrami
from .harmonic import tension_arrays
from .heat import HeatConfig, HeatTrajectory, frame_defect, run_heat_flow

# frames are re-orthonormalized well before the 1e-8 orthonormality budget
GAUGE_REORTH_TOL = 1e-9


def theta_frame(u2):
    """Coordinate frame ``(e^{u2} d/dy1, d/dy2)`` as an array ``[j, p, ...]``."""
    u2 = np.asarray(u2, dtype=float)
    E = np.zeros((2, 2) + u2.shape)
    E[0, 0] = np.exp(u2)
    E[1, 1] = 1.0
    return E


def _inner(u2, X, Y):
    return np.exp(-2.0 * u2) * X[0] * Y[0] + X[1] * Y[1]


def frame_components(u2, X, E):
    """``(<X, e_1>, <X, e_2>)`` for a vector field ``X[p, ...]``."""
    g = np.exp(-2.0 * u2)
    return np.array([g * X[0] * E[0, 0] + X[1] * E[0, 1],
                     g * X[0] * E[1, 0] + X[1] * E[1, 1]])


def _covariant(u2, du, e, de):
    # nabla_du e = de + Gbar(du, e) with Gbar^1_12 = -1, Gbar^2_11 = e^{-2 u2}
    return np.array([de[0] - (du[0] * e[1] + du[1] * e[0]),
                     de[1] + np.exp(-2.0 * u2) * du[0] * e[0]])


def connection_scalar(u2, du, E, dE):
    """``a`` along one direction, antisymmetrized so a constant frame rotation leaves it exact."""
    n1 = _covariant(u2, du, E[0], dE[0])
    n2 = _covariant(u2, du, E[1], dE[1])
    return 0.5 * (_inner(u2, n2, E[0]) - _inner(u2, n1, E[1]))


def act(a, phi):
    """Skew matrix ``[[0, a], [-a, 0]]`` applied to frame components."""
    return np.array([a * phi[1], -a * phi[0]])


def curvature(x, y, z):
    """``R(x, y) z = <x, z> y - <y, z> x`` on frame components (orthonormal, so Euclidean)."""
    xz = x[0] * z[0] + x[1] * z[1]
    yz = y[0] * z[0] + y[1] * z[1]
    return xz * y - yz * x


def wedge_scalar(x, y):
    """``x^1 y^2 - x^2 y^1``."""
    return x[0] * y[1] - x[1] * y[0]


def rotate_frame(E, angle):
    """``(cos e_1 - sin e_2, sin e_1 + cos e_2)`` with a per-node angle."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * E[0] - s * E[1], s * E[0] + c * E[1]])


@dataclass
class LimitConnection:
    a1: np.ndarray
    a2: np.ndarray
    phi1: np.ndarray  # (2, n2, n1)
    phi2: np.ndarray
    div_lhs: np.ndarray
    div_rhs: np.ndarray
    div_identity_residual: float
    tension_sup: float
    warning: str | None = None


def _interior(grid: Grid, margin=1):
    m = np.zeros(grid.shape, dtype=bool)
    m[margin:grid.n2 - margin, margin:grid.n1 - margin] = True
    return m


def limit_connection(Q: MapField, harmonic_tol=1e-2, margin=2) -> LimitConnection:
    """Connection scalars and differential fields of ``Q`` in the frame ``theta_frame(Q2)``.

    ``a_i = -e^{-Q2} d_i Q1`` and ``phi_i = (e^{-Q2} d_i Q1, d_i Q2)``.  For a
    harmonic ``Q`` the divergence ``e^{2 x2} d_1 a_1 + d_2 a_2 - a_2`` equals
    ``-(e^{2 x2} d_1 Q1 d_1 Q2 + d_2 Q1 d_2 Q2) e^{-Q2}``; the reported
    residual is the interior sup of the finite-difference left side minus
    this closed form.
    """
    g = Q.grid
    d1q1, d2q1 = gradient(g, Q.u1)
    d1q2, d2q2 = gradient(g, Q.u2)
    eq = np.exp(-Q.u2)
    a1 = -eq * d1q1
    a2 = -eq * d2q1
    d1a1, _ = gradient(g, a1)
    _, d2a2 = gradient(g, a2)
    lhs = g.hinv11 * d1a1 + d2a2 - a2
    rhs = -(g.hinv11 * d1q1 * d1q2 + d2q1 * d2q2) * eq
    m = _interior(g, margin)
    t1, t2 = tension_arrays(g, Q.u1, Q.u2)
    tsup = float(max(np.max(np.abs(t1)), np.max(np.abs(t2))))
    warn = None
    if tsup > harmonic_tol:
        warn = f"map is not harmonic to tolerance: sup |tau| = {tsup:.3g} > {harmonic_tol:.3g}"
    return LimitConnection(a1, a2, np.array([eq * d1q1, d1q2]), np.array([eq * d2q1, d2q2]),
                           lhs, rhs, float(np.max(np.abs(lhs - rhs)[m])), tsup, warn)


@dataclass
class GaugeSnapshot:
    s: float
    u: np.ndarray  # (2, n2, n1)
    frame: np.ndarray  # (2, 2, n2, n1)
    tension: np.ndarray  # (2, n2, n1)
    phi_1: np.ndarray | None = None
    phi_2: np.ndarray | None = None
    phi_s: np.ndarray | None = None
    phi_t: np.ndarray | None = None
    a_1: np.ndarray | None = None
    a_2: np.ndarray | None = None
    a_t: np.ndarray | None = None
    wave_tension: np.ndarray | None = None  # D_t phi_t - phi_s


@dataclass
class GaugeTrajectory:
    grid: Grid
    snapshots: list
    limit: LimitConnection
    t: float = 0.0
    rotation_angle: np.ndarray | None = field(default=None, repr=False)
    transport_correction: np.ndarray | None = field(default=None, repr=False)
    det_defect: float = 0.0
    orthonormality_defect: float = 0.0
    reorthonormalizations: int = 0
    converged: bool = True
    final_sup_distance: float = 0.0
    partial: bool = True

    @property
    def s(self):
        return np.array([sn.s for sn in self.snapshots])

    def index(self, s):
        i = int(np.argmin(np.abs(self.s - s)))
        if not math.isclose(self.snapshots[i].s, s, rel_tol=1e-9, abs_tol=1e-12):
            raise HyperwaveError(f"no snapshot at s={s}")
        return i


def gauge_heat_flow(u0: MapField, anchor: MapField, cfg: HeatConfig, **kw) -> HeatTrajectory:
    """Heat flow with the frame ``theta_frame(u0)`` transported alongside."""
    kw.setdefault("reorth_tol", GAUGE_REORTH_TOL)
    return run_heat_flow(u0, anchor, cfg, frame0=theta_frame(u0.u2), **kw)


def transport_frames(traj: HeatTrajectory, Q: MapField, require_converged=True,
                     t=0.0) -> GaugeTrajectory:
    """Caloric frames along a heat trajectory, rotated to match the limit frame.

    If the trajectory carries no frames the flow is re-run with the frame
    transported (same steps).  At the last snapshot the transported frame is
    compared with the parallel transport of ``theta_frame(Q)`` along the
    geodesic from ``Q`` to ``u(s_end)``; the per-node rotation angle between
    the two is applied to every snapshot.
    """
    if require_converged and not traj.converged:
        raise GaugeError(f"heat flow did not converge (final s={traj.snapshots[-1].s:.4g}); "
                         "the caloric gauge is undefined")
    if traj.snapshots[0].frame is None:
        if traj.config is None:
            raise GaugeError("trajectory has neither frames nor the config to re-run it")
        traj = gauge_heat_flow(traj.snapshots[0].u, traj.anchor, traj.config)
    g = traj.grid
    last = traj.snapshots[-1]
    E, u = last.frame, last.u
    eu = np.exp(-u.u2)
    c11, c12 = eu * E[0, 0], E[0, 1]
    c21, c22 = eu * E[1, 0], E[1, 1]
    det = c11 * c22 - c12 * c21
    det_defect = float(np.max(np.abs(det - 1.0)))
    if det_defect > 1e-6:
        raise GaugeError(f"final frame is not a rotation of the coordinate frame "
                         f"(max |det - 1| = {det_defect:.3g})")
    alpha = np.arctan2(c12, c11)
    beta = transport_angle(TargetPoint(Q.u1, Q.u2), TargetPoint(u.u1, u.u2))
    gamma = alpha - beta
    snaps = []
    orth = 0.0
    for sn in traj.snapshots:
        F = rotate_frame(sn.frame, gamma)
        orth = max(orth, frame_defect(sn.u.u2, F))
        snaps.append(GaugeSnapshot(sn.s, sn.u.stacked(), F,
                                   np.array([sn.tension.v1, sn.tension.v2])))
    dist = hyp_distance(DomainPoint(u.u1, u.u2), DomainPoint(Q.u1, Q.u2))
    return GaugeTrajectory(g, snaps, limit_connection(Q), t, gamma, beta, det_defect, orth,
                           traj.reorthonormalizations, bool(traj.converged),
                           float(np.max(dist)), True)


def _spatial(grid, sn: GaugeSnapshot):
    u2 = sn.u[1]
    du = np.array([gradient(grid, sn.u[0]), gradient(grid, sn.u[1])])  # [p, i]
    dE = np.empty((2,) + sn.frame.shape)  # [i, j, p]
    for j in range(2):
        for p in range(2):
            dE[0, j, p], dE[1, j, p] = gradient(grid, sn.frame[j, p])
    out = {}
    for i, name in ((0, "1"), (1, "2")):
        out["phi_" + name] = frame_components(u2, du[:, i], sn.frame)
        out["a_" + name] = connection_scalar(u2, du[:, i], sn.frame, dE[i])
    out["phi_s"] = frame_components(u2, sn.tension, sn.frame)
    return out


def _common_s(slices):
    keys = None
    for gt in slices:
        ks = {round(sn.s, 12) for sn in gt.snapshots}
        keys = ks if keys is None else keys & ks
    return sorted(keys)


def compute_gauge_fields(slices, dt=None):
    """Enrich gauge trajectories at neighbouring times with all differential fields.

    ``slices`` are gauge trajectories of heat flows started from a wave map
    at equally spaced times.  Snapshots are restricted to the ``s`` values
    common to all slices.  Every slice gets ``phi_1, phi_2, phi_s, a_1,
    a_2``; slices with a neighbour on both sides also get ``phi_t, a_t`` and
    ``wave_tension`` from centered time differences.  ``partial`` marks the
    slices lacking the time fields.
    """
    if not slices:
        raise HyperwaveError("no slices given")
    if dt is None and len(slices) > 1:
        ts = np.array([gt.t for gt in slices])
        steps = np.diff(ts)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-14) or steps[0] <= 0:
            raise HyperwaveError(f"slices are not equally spaced in t: {ts}")
        dt = float(steps[0])
    keys = _common_s(slices)
    out = []
    for gt in slices:
        snaps = [replace(sn) for sn in gt.snapshots if round(sn.s, 12) in keys]
        for sn in snaps:
            for k, v in _spatial(gt.grid, sn).items():
                setattr(sn, k, v)
        out.append(replace(gt, snapshots=snaps, partial=True))
    for k in range(1, len(out) - 1):
        prev, cur, nxt = out[k - 1], out[k], out[k + 1]
        for m, sn in enumerate(cur.snapshots):
            up, un = prev.snapshots[m].u, nxt.snapshots[m].u
            dtu = (un - up) / (2.0 * dt)
            ddu = (un - 2.0 * sn.u + up) / dt**2
            dtE = (nxt.snapshots[m].frame - prev.snapshots[m].frame) / (2.0 * dt)
            u2 = sn.u[1]
            sn.phi_t = frame_components(u2, dtu, sn.frame)
            sn.a_t = connection_scalar(u2, dtu, sn.frame, dtE)
            # nabla_t d_t u = d_tt u + Gbar(d_t u, d_t u)
            acc = np.array([ddu[0] - 2.0 * dtu[0] * dtu[1],
                            ddu[1] + np.exp(-2.0 * u2) * dtu[0] ** 2])
            sn.wave_tension = frame_components(u2, acc, sn.frame) - sn.phi_s
        cur.partial = False
    return out


def heat_tension_crosscheck(sn: GaugeSnapshot, grid: Grid, margin=2):
    """``phi_s - (e^{2 x2} D_1 phi_1 + D_2 phi_2 - phi_2)`` on interior nodes."""
    d11, _ = gradient(grid, sn.phi_1)
    _, d22 = gradient(grid, sn.phi_2)
    rhs = (grid.hinv11 * (d11 + act(sn.a_1, sn.phi_1)) + d22 + act(sn.a_2, sn.phi_2)
           - sn.phi_2)
    return _report(grid, sn.phi_s - rhs, margin)


def _report(grid, r, margin=2):
    m = _interior(grid, margin)
    mag = np.sqrt(np.sum(np.square(r), axis=0)) if np.ndim(r) == 3 else np.abs(r)
    mag = np.where(m, mag, 0.0)
    return {"sup": float(np.max(mag)), "l2": float(math.sqrt(integrate_volume(grid, mag**2)))}


def wave_tension_field(slices, s=0.0):
    """``W = D_t phi_t - phi_s`` at the central slice of three or more enriched slices."""
    if len(slices) < 3:
        raise HyperwaveError("the wave tension field needs at least 3 time slices")
    c = slices[len(slices) // 2]
    if c.partial:
        raise HyperwaveError("central slice lacks time fields; run compute_gauge_fields first")
    return c.snapshots[c.index(s)].wave_tension


def _torsion(grid, a_al, phi_al, a_be, phi_be, d_al_phi_be, d_be_phi_al):
    return d_al_phi_be + act(a_al, phi_be) - d_be_phi_al - act(a_be, phi_al)


def identity_residuals(slices, k=None, margin=2, s_values=None):
    """Torsion, curl and ``a_t`` integral residuals for slice ``k`` (default: central).

    Torsion: ``D_a phi_b - D_b phi_a``; curl: ``d_a a_b - d_b a_a + phi_a ^ phi_b``
    for ``(a, b)`` in ``(1,2), (t,1), (t,2)``.  Sup norms over interior nodes
    and the chosen ``s`` values (all common ones by default).

    The ``a_t`` check compares ``a_t(s)`` with ``int_s^S phi_s ^ phi_t`` by the
    trapezoid rule on the snapshot ladder; the allowance is the tail
    ``|phi_s(S)|_inf |phi_t(S)|_inf / delta`` with ``delta`` the decay rate
    of that product fitted over ``[S/2, S]``, plus the quadrature error
    estimated by halving the ladder.
    """
    if k is None:
        k = len(slices) // 2
    if not 0 < k < len(slices) - 1 or slices[k].partial:
        raise HyperwaveError("identity residuals need an enriched slice with both neighbours")
    dt = slices[k + 1].t - slices[k].t
    cur, prev, nxt = slices[k], slices[k - 1], slices[k + 1]
    g = cur.grid
    m = _interior(g, margin)
    res = {f"{kind}_{p}": 0.0 for kind in ("torsion", "curl") for p in ("12", "t1", "t2")}
    idx = range(len(cur.snapshots)) if s_values is None else [cur.index(s) for s in s_values]

    def sup(x):
        mag = np.sqrt(np.sum(np.square(x), axis=0)) if np.ndim(x) == 3 else np.abs(x)
        return float(np.max(mag[m]))

    for i in idx:
        sn, sp, sx = cur.snapshots[i], prev.snapshots[i], nxt.snapshots[i]
        d1p2, d2p2 = gradient(g, sn.phi_2)
        d1p1, d2p1 = gradient(g, sn.phi_1)
        d1pt, d2pt = gradient(g, sn.phi_t)
        dtp1 = (sx.phi_1 - sp.phi_1) / (2.0 * dt)
        dtp2 = (sx.phi_2 - sp.phi_2) / (2.0 * dt)
        d1a2 = gradient(g, sn.a_2)[0]
        d2a1 = gradient(g, sn.a_1)[1]
        d1at, d2at = gradient(g, sn.a_t)
        dta1 = (sx.a_1 - sp.a_1) / (2.0 * dt)
        dta2 = (sx.a_2 - sp.a_2) / (2.0 * dt)
        t12 = _torsion(g, sn.a_1, sn.phi_1, sn.a_2, sn.phi_2, d1p2, d2p1)
        tt1 = _torsion(g, sn.a_t, sn.phi_t, sn.a_1, sn.phi_1, dtp1, d1pt)
        tt2 = _torsion(g, sn.a_t, sn.phi_t, sn.a_2, sn.phi_2, dtp2, d2pt)
        c12 = d1a2 - d2a1 + wedge_scalar(sn.phi_1, sn.phi_2)
        ct1 = dta1 - d1at + wedge_scalar(sn.phi_t, sn.phi_1)
        ct2 = dta2 - d2at + wedge_scalar(sn.phi_t, sn.phi_2)
        for key, r in (("torsion_12", t12), ("torsion_t1", tt1), ("torsion_t2", tt2),
                       ("curl_12", c12), ("curl_t1", ct1), ("curl_t2", ct2)):
            res[key] = max(res[key], sup(r))
    res.update(at_integral_check(slices, k, margin))
    return res


def spatial_identity_residuals(traj: GaugeTrajectory, margin=2):
    """Torsion and curl residuals in the ``(1, 2)`` plane over all snapshots of one slice."""
    g = traj.grid
    m = _interior(g, margin)
    tor = curl = 0.0
    for sn in traj.snapshots:
        if sn.phi_1 is None:
            raise HyperwaveError("slice lacks spatial fields; run compute_gauge_fields first")
        t12 = _torsion(g, sn.a_1, sn.phi_1, sn.a_2, sn.phi_2, gradient(g, sn.phi_2)[0],
                       gradient(g, sn.phi_1)[1])
        c12 = gradient(g, sn.a_2)[0] - gradient(g, sn.a_1)[1] + wedge_scalar(sn.phi_1, sn.phi_2)
        tor = max(tor, float(np.max(np.sqrt(np.sum(t12**2, axis=0))[m])))
        curl = max(curl, float(np.max(np.abs(c12)[m])))
    return {"torsion_12": tor, "curl_12": curl}


def _tail_integrals(s, w):
    # int_{s_i}^{S} w ds by the trapezoid rule, for every ladder point
    h = np.diff(s).reshape((-1,) + (1,) * (w.ndim - 1))
    seg = 0.5 * h * (w[1:] + w[:-1])
    out = np.zeros_like(w)
    out[:-1] = np.cumsum(seg[::-1], axis=0)[::-1]
    return out


def _fit_rate(s, y):
    ok = y > 0
    if np.count_nonzero(ok) < 2:
        return math.inf
    slope = np.polyfit(s[ok], np.log(y[ok]), 1)[0]
    return -slope


def _at_residual(s, w, at, m):
    return (at - _tail_integrals(s, w))[:, m]


def at_integral_check(slices, k=None, margin=2):
    """``a_t(s) - int_s^S phi_s ^ phi_t`` on the ladder of slice ``k`` with its error allowance.

    The allowance adds the tail ``|phi_s(S)|_inf |phi_t(S)|_inf / delta``, the
    trapezoid error estimated by halving the ladder and, when slices ``k +- 2``
    exist, the time-differencing error estimated by Richardson from the
    stencil of twice the width (``(R_2dt - R_dt) / 3``).
    """
    if k is None:
        k = len(slices) // 2
    cur = slices[k]
    s = cur.s
    snaps = cur.snapshots
    m = _interior(cur.grid, margin)
    w = np.array([wedge_scalar(sn.phi_s, sn.phi_t) for sn in snaps])
    at = np.array([sn.a_t for sn in snaps])
    resid = _at_residual(s, w, at, m)
    # every other ladder point, keeping both ends
    sub = np.unique(np.r_[np.arange(0, len(s), 2), len(s) - 1])
    quad_err = float(np.max(np.abs(_tail_integrals(s, w)[sub]
                                   - _tail_integrals(s[sub], w[sub]))[:, m]))
    time_err = 0.0
    if k >= 2 and k + 2 < len(slices):
        dt2 = slices[k + 2].t - slices[k - 2].t
        lo, hi = slices[k - 2].snapshots, slices[k + 2].snapshots
        w2, at2 = [], []
        for sn, a, b in zip(snaps, lo, hi):
            dtu = (b.u - a.u) / dt2
            phi_t = frame_components(sn.u[1], dtu, sn.frame)
            at2.append(connection_scalar(sn.u[1], dtu, sn.frame, (b.frame - a.frame) / dt2))
            w2.append(wedge_scalar(sn.phi_s, phi_t))
        wide = _at_residual(s, np.array(w2), np.array(at2), m)
        time_err = float(np.max(np.abs(wide - resid)) / 3.0)
    prod = np.array([np.max(np.abs(sn.phi_s[:, m])) * np.max(np.abs(sn.phi_t[:, m]))
                     for sn in snaps])
    S = s[-1]
    win = s >= 0.5 * S
    rate = _fit_rate(s[win], prod[win])
    tail = float(prod[-1] / rate) if rate > 0 else math.inf
    return {
        "at_integral_residual": float(np.max(np.abs(resid))),
        "at_tail_bound": tail,
        "at_quadrature_error": quad_err,
        "at_time_difference_error": time_err,
        "at_allowance": tail + quad_err + time_err,
        "at_decay_rate": float(rate),
        "at_final_sup": float(np.max(np.abs(at[-1][m]))),
        "at_initial_sup": float(np.max(np.abs(at[0][m]))),
        "phi_t_sup": float(max(np.max(np.abs(sn.phi_t[:, m])) for sn in snaps)),
    }


MASTER_TERMS = (
    # left side
    "d_tt phi_s", "-lap phi_s", "-2 h A_inf d phi_s", "-h A_inf A_inf phi_s",
    "-h (phi_s ^ phi_inf) phi_inf", "-h div(A_inf) phi_s",
    # right side
    "-2 A_t d_t phi_s", "-A_t A_t phi_s", "-d_t A_t phi_s", "d_s W", "R(phi_t, phi_s) phi_t",
    "2 h A_con d phi_s", "h A_con A_inf phi_s", "h A_inf A_con phi_s", "h A_con A_con phi_s",
    "h div(A_con) phi_s", "h (phi_s ^ phi_inf) phi_con", "h (phi_s ^ phi_con) phi_inf",
    "h (phi_s ^ phi_con) phi_con",
)
_LEFT = 6
_W_TERMS = MASTER_TERMS[2:6]


def _div(grid, a1, a2):
    return grid.hinv11 * gradient(grid, a1)[0] + gradient(grid, a2)[1] - a2


def master_equation_terms(slices, s, ds=None):
    """Every term of the wave equation for ``phi_s`` at the central slice.

    Needs five enriched slices (``A_t`` is differenced in ``t``) and
    snapshots at ``s - ds, s, s + ds`` (``W`` is differenced in ``s``).
    Returns a dict ``name -> (2, n2, n1)`` array.
    """
    missing = []
    if len(slices) < 5:
        missing.append(f"5 time slices (got {len(slices)})")
    else:
        c = len(slices) // 2
        for k in (c - 1, c, c + 1):
            if slices[k].partial:
                missing.append(f"time fields on slice {k}")
    if missing:
        raise HyperwaveError("incomplete stencil for the master equation: " + ", ".join(missing))
    cen = slices[c]
    s_all = cen.s
    i = cen.index(s)
    if ds is None:
        if not 0 < i < len(s_all) - 1:
            raise HyperwaveError("incomplete stencil for the master equation: s neighbours")
        lo, hi = i - 1, i + 1
    else:
        lo, hi = cen.index(s - ds), cen.index(s + ds)
    g = cen.grid
    dt = slices[c + 1].t - cen.t
    sn = cen.snapshots[i]
    sp, sx = slices[c - 1].snapshots[i], slices[c + 1].snapshots[i]
    P = sn.phi_s
    L = cen.limit
    h = g.hinv11
    d1P, d2P = gradient(g, P)
    dtP = (sx.phi_s - sp.phi_s) / (2.0 * dt)
    dtA = (sx.a_t - sp.a_t) / (2.0 * dt)
    dW = ((cen.snapshots[hi].wave_tension - cen.snapshots[lo].wave_tension)
          / (cen.snapshots[hi].s - cen.snapshots[lo].s))
    c1, c2 = sn.a_1 - L.a1, sn.a_2 - L.a2
    q1, q2 = sn.phi_1 - L.phi1, sn.phi_2 - L.phi2
    at = sn.a_t
    T = {
        "d_tt phi_s": (sx.phi_s - 2.0 * P + sp.phi_s) / dt**2,
        "-lap phi_s": -laplace_beltrami(g, P),
        "-2 h A_inf d phi_s": -2.0 * (h * act(L.a1, d1P) + act(L.a2, d2P)),
        "-h A_inf A_inf phi_s": -(h * act(L.a1, act(L.a1, P)) + act(L.a2, act(L.a2, P))),
        "-h (phi_s ^ phi_inf) phi_inf": -(h * curvature(P, L.phi1, L.phi1)
                                          + curvature(P, L.phi2, L.phi2)),
        "-h div(A_inf) phi_s": -act(_div(g, L.a1, L.a2), P),
        "-2 A_t d_t phi_s": -2.0 * act(at, dtP),
        "-A_t A_t phi_s": -act(at, act(at, P)),
        "-d_t A_t phi_s": -act(dtA, P),
        "d_s W": dW,
        "R(phi_t, phi_s) phi_t": curvature(sn.phi_t, P, sn.phi_t),
        "2 h A_con d phi_s": 2.0 * (h * act(c1, d1P) + act(c2, d2P)),
        "h A_con A_inf phi_s": h * act(c1, act(L.a1, P)) + act(c2, act(L.a2, P)),
        "h A_inf A_con phi_s": h * act(L.a1, act(c1, P)) + act(L.a2, act(c2, P)),
        "h A_con A_con phi_s": h * act(c1, act(c1, P)) + act(c2, act(c2, P)),
        "h div(A_con) phi_s": act(_div(g, c1, c2), P),
        "h (phi_s ^ phi_inf) phi_con": h * curvature(P, L.phi1, q1) + curvature(P, L.phi2, q2),
        "h (phi_s ^ phi_con) phi_inf": h * curvature(P, q1, L.phi1) + curvature(P, q2, L.phi2),
        "h (phi_s ^ phi_con) phi_con": h * curvature(P, q1, q1) + curvature(P, q2, q2),
    }
    return T


def master_equation_residual(slices, s, ds=None, margin=2):
    """Left minus right side of the ``phi_s`` wave equation, with a per-term table.

    Reports interior L2 norms: ``residual``, ``residual_without_W`` (the
    same balance with the magnetic potential terms dropped), the largest
    single term and ``terms`` mapping each name to its norm.
    """
    T = master_equation_terms(slices, s, ds)
    g = slices[0].grid
    m = _interior(g, margin)

    def l2(x):
        mag2 = np.where(m, np.sum(np.square(x), axis=0), 0.0)
        return float(math.sqrt(integrate_volume(g, mag2)))

    names = list(MASTER_TERMS)
    left = sum(T[n] for n in names[:_LEFT])
    right = sum(T[n] for n in names[_LEFT:])
    noW = left - sum(T[n] for n in _W_TERMS)
    terms = {n: l2(T[n]) for n in names}
    return {
        "s": float(s),
        "residual": l2(left - right),
        "residual_without_W": l2(noW - right),
        "max_term": max(terms.values()),
        "max_term_name": max(terms, key=terms.get),
        "terms": terms,
    }
