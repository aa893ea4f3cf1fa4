import math
from dataclasses import replace

import numpy as np
import pytest

from hyperwave.config import GaugeSampling
from hyperwave.errors import GaugeError, HyperwaveError
from hyperwave.experiments import gauge_slices
from hyperwave.gauge import (MASTER_TERMS, compute_gauge_fields, gauge_heat_flow,
                             heat_tension_crosscheck, identity_residuals, limit_connection,
                             master_equation_residual, rotate_frame, theta_frame,
                             transport_frames, wave_tension_field, _interior)
from hyperwave.grid import MapField, build_grid
from hyperwave.harmonic import (HolomorphicSpec, constant_map, construct_admissible,
                                energy_density, identity_map)
from hyperwave.heat import HeatConfig, frame_defect, run_heat_flow
from hyperwave.wave import Bump

from conftest import observed_order

SPEC = HolomorphicSpec([0, 1], 0.1)
SAMPLING = GaugeSampling(t0=0.3, dt=0.05, slices=5, s_values=[0.25], s_max=8.0, stop_tol=1e-7)


@pytest.fixture(scope="module")
def setup():
    g = build_grid(2, 1, 41, 21)
    return g, construct_admissible(SPEC, g)


@pytest.fixture(scope="module")
def slices(setup):
    g, Q = setup
    return gauge_slices(Q, Bump(width=0.25), SAMPLING)


def static_slices(Q, n=3, s_values=(0.0,), dt=0.1):
    tr = gauge_heat_flow(Q.copy(), Q, HeatConfig(s_max=1.0, stop_tol=1e-12))
    gt = transport_frames(tr, Q, require_converged=False)
    base = gt.snapshots[0]
    gt = replace(gt, snapshots=[replace(base, s=float(s)) for s in s_values])
    return compute_gauge_fields([replace(gt, t=k * dt) for k in range(n)])


def interior_sup(g, x, margin=2):
    m = _interior(g, margin)
    mag = np.sqrt(np.sum(np.square(x), axis=0)) if np.ndim(x) == 3 else np.abs(x)
    return float(np.max(mag[m]))


# ---- limit connection -------------------------------------------------------------

def test_limit_connection_constant_map():
    L = limit_connection(constant_map(build_grid(2, 2, 21, 21), 0.3, 0.2))
    for f in (L.a1, L.a2, L.phi1, L.phi2):
        assert not np.any(f)
    assert L.div_identity_residual == 0 and L.warning is None


def test_limit_connection_identity_hand_values():
    g = build_grid(2, 2, 41, 41)
    L = limit_connection(identity_map(g))
    assert np.allclose(L.a1, -np.exp(-g.X2), rtol=1e-12)
    assert np.allclose(L.a2, 0.0, atol=1e-12)
    assert np.allclose(L.phi1[0], np.exp(-g.X2)) and np.allclose(L.phi2[1], 1.0)
    assert L.div_identity_residual < 1e-10


def test_divergence_identity_second_order():
    r = [limit_connection(construct_admissible(SPEC, build_grid(4, 4, n, n))).div_identity_residual
         for n in (41, 81, 161)]
    assert np.all(observed_order(r) >= 1.9)


def test_limit_connection_warns_for_non_harmonic_map():
    g = build_grid(2, 2, 21, 21)
    Q = constant_map(g)
    Q.u1 = Q.u1 + 0.5 * np.sin(g.X1) * np.cos(g.X2)
    assert "not harmonic" in limit_connection(Q).warning


# ---- frames ---------------------------------------------------------------------------

def test_static_constant_map_gauge():
    g = build_grid(2, 2, 21, 21)
    sl = static_slices(constant_map(g, 0.1, -0.2))
    c = sl[1]
    assert np.all(c.rotation_angle == 0)
    sn = c.snapshots[0]
    assert np.array_equal(sn.frame, theta_frame(np.full(g.shape, -0.2)))
    for f in (sn.phi_1, sn.phi_2, sn.phi_s, sn.phi_t, sn.a_1, sn.a_2, sn.a_t, sn.wave_tension):
        assert not np.any(f)
    r = identity_residuals(sl)
    assert all(r[k] == 0 for k in ("torsion_12", "torsion_t1", "torsion_t2",
                                   "curl_12", "curl_t1", "curl_t2", "at_integral_residual"))


def test_orthonormality_and_rotation(slices):
    for gt in slices:
        assert gt.orthonormality_defect <= 1e-8
        assert gt.det_defect <= 1e-8
        assert gt.converged
        for sn in gt.snapshots:
            assert frame_defect(sn.u[1], sn.frame) <= 1e-8


def test_transport_requires_convergence(setup):
    g, Q = setup
    from hyperwave.wave import perturb
    u0 = perturb(Q, Bump(width=0.25)).u
    tr = gauge_heat_flow(u0, Q, HeatConfig(s_max=0.01, stop_tol=1e-12))
    with pytest.raises(GaugeError):
        transport_frames(tr, Q)
    gt = transport_frames(tr, Q, require_converged=False)
    assert not gt.converged


def test_transport_reruns_flow_without_frames(setup):
    g, Q = setup
    from hyperwave.wave import perturb
    u0 = perturb(Q, Bump(width=0.25)).u
    cfg = HeatConfig(s_max=8.0, snapshot_s=[0, 0.5], stop_tol=1e-7)
    plain = run_heat_flow(u0, Q, cfg)
    a = transport_frames(plain, Q)
    b = transport_frames(gauge_heat_flow(u0, Q, cfg), Q)
    assert np.allclose(a.snapshots[1].frame, b.snapshots[1].frame, atol=1e-12)


def test_limit_frame_matches_transported_theta(slices):
    # at the end of the flow the caloric frame is Theta(Q) carried along the geodesic to u
    for gt in slices:
        sn = gt.snapshots[-1]
        Qf = gt.limit
        beta = gt.transport_correction
        e = np.exp(-sn.u[1])
        angle = np.arctan2(sn.frame[0, 1], e * sn.frame[0, 0])
        assert np.max(np.abs(angle - beta)) < 1e-8
        assert gt.final_sup_distance < 1e-4
        assert Qf is not None


# ---- gauge fields ---------------------------------------------------------------------

def test_static_Q_connection_is_limit_connection():
    errs = []
    for n1, n2 in ((21, 11), (41, 21), (81, 41)):
        g = build_grid(2, 1, n1, n2)
        Q = construct_admissible(SPEC, g)
        sn = static_slices(Q, 1)[0].snapshots[0]
        L = limit_connection(Q)
        errs.append(max(interior_sup(g, sn.a_1 - L.a1), interior_sup(g, sn.a_2 - L.a2)))
    assert errs[-1] < 1e-4
    assert np.all(observed_order(errs) > 1.8)


def test_frame_components_recover_energy_density(slices):
    gt = slices[2]
    g = gt.grid
    m = _interior(g, 1)
    for sn in gt.snapshots[::10]:
        lhs = g.hinv11 * np.sum(sn.phi_1**2, axis=0) + np.sum(sn.phi_2**2, axis=0)
        dens = energy_density(MapField(g, sn.u[0], sn.u[1]))
        assert np.max(np.abs(lhs - dens)[m]) <= 1e-8 * np.max(dens)
        dtu = (slices[3].snapshots[0].u - slices[1].snapshots[0].u) / (2 * SAMPLING.dt)
    sn = gt.snapshots[0]
    intrinsic = np.exp(-2 * sn.u[1]) * dtu[0] ** 2 + dtu[1] ** 2
    assert np.max(np.abs(np.sum(sn.phi_t**2, axis=0) - intrinsic)) <= 1e-8 * np.max(intrinsic)


def test_gauge_covariance_under_global_rotation(slices):
    th = math.pi / 4
    rot = [replace(gt, snapshots=[replace(sn, frame=rotate_frame(sn.frame, th))
                                  for sn in gt.snapshots]) for gt in slices]
    rr = compute_gauge_fields(rot)
    c, s = math.cos(th), math.sin(th)
    for a, b in zip(slices[1:4], rr[1:4]):
        for sa, sb in zip(a.snapshots[::7], b.snapshots[::7]):
            for name in ("phi_1", "phi_2", "phi_t", "phi_s"):
                p, q = getattr(sa, name), getattr(sb, name)
                assert np.max(np.abs(q[0] - (c * p[0] - s * p[1]))) < 1e-10
                assert np.max(np.abs(q[1] - (s * p[0] + c * p[1]))) < 1e-10
            for name in ("a_1", "a_2", "a_t"):
                assert np.max(np.abs(getattr(sa, name) - getattr(sb, name))) < 1e-10


def test_slices_must_be_equally_spaced(setup):
    g, Q = setup
    sl = static_slices(constant_map(g), 3)
    bad = [sl[0], sl[1], replace(sl[2], t=sl[2].t + 0.05)]
    with pytest.raises(HyperwaveError):
        compute_gauge_fields(bad)


def test_partial_flag_and_single_slice(setup):
    g, Q = setup
    one = static_slices(Q, 1)
    assert one[0].partial and one[0].snapshots[0].phi_t is None
    three = static_slices(Q, 3)
    assert three[0].partial and not three[1].partial and three[2].partial


# ---- identities ----------------------------------------------------------------------

def test_heat_tension_crosscheck(setup, slices):
    g, Q = setup
    zero = static_slices(constant_map(g), 1)[0].snapshots[0]
    assert heat_tension_crosscheck(zero, g)["sup"] == 0
    static = heat_tension_crosscheck(static_slices(Q, 1)[0].snapshots[0], g)
    c = slices[2]
    pert = heat_tension_crosscheck(c.snapshots[c.index(0.5)], g)
    assert pert["sup"] < 10 * static["sup"]


def test_heat_tension_crosscheck_order_on_static_Q():
    r = []
    for n1, n2 in ((41, 21), (81, 41), (161, 81)):
        g = build_grid(2, 1, n1, n2)
        Q = construct_admissible(SPEC, g)
        r.append(heat_tension_crosscheck(static_slices(Q, 1)[0].snapshots[0], g)["sup"])
    assert np.all(observed_order(r) >= 1.9)


def test_identity_residuals_on_static_Q(setup):
    g, Q = setup
    r = identity_residuals(static_slices(Q, 3))
    assert r["at_integral_residual"] == 0 and r["torsion_t1"] == 0 and r["curl_t1"] == 0
    assert r["curl_12"] < 1e-3


def test_identity_residuals_perturbed(slices):
    r = identity_residuals(slices)
    assert r["at_integral_residual"] <= r["at_allowance"]
    assert r["at_final_sup"] <= 10 * SAMPLING.stop_tol * r["phi_t_sup"]
    assert r["at_final_sup"] < 1e-3 * r["at_initial_sup"]


def test_identity_residuals_need_neighbours(slices):
    with pytest.raises(HyperwaveError):
        identity_residuals(slices, 0)


def test_wave_tension_field(setup, slices):
    g, Q = setup
    sl = static_slices(constant_map(g, 0.2, 0.3), 3, (0.0, 0.5))
    assert not np.any(wave_tension_field(sl, 0.0)) and not np.any(wave_tension_field(sl, 0.5))
    with pytest.raises(HyperwaveError):
        wave_tension_field(sl[:2])
    # at s = 0 the dt = 0.05 time difference of the sharp bump dominates; the smoothed
    # slices carry a wave tension far below the time derivative they are built from
    c = slices[2]
    for s in (0.1, 0.5):
        W = wave_tension_field(slices, s)
        assert interior_sup(g, W) < 0.01 * interior_sup(g, c.snapshots[c.index(s)].phi_t)


# ---- master equation -----------------------------------------------------------------

def test_master_equation_static_vanishes(setup):
    g, Q = setup
    sl = static_slices(constant_map(g), 5, (0.0, 0.24, 0.25, 0.26))
    mr = master_equation_residual(sl, 0.25, 0.01)
    assert mr["residual"] == 0 and mr["max_term"] == 0
    assert set(mr["terms"]) == set(MASTER_TERMS) and len(MASTER_TERMS) == 19


def test_master_equation_needs_five_slices(slices):
    with pytest.raises(HyperwaveError, match="5 time slices"):
        master_equation_residual(slices[1:4], 0.25, 0.01)


def test_master_equation_balances_and_needs_W(slices):
    mr = master_equation_residual(slices, 0.25, 0.01)
    assert 10 * mr["residual"] <= mr["max_term"]
    assert mr["residual_without_W"] >= 2 * mr["residual"]
