"""Experiment pipelines behind the CLI subcommands, each returning a :class:`RunReport`."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, GaugeSampling, config_hash
from .errors import FitDomainError, HyperwaveError
from .gauge import (compute_gauge_fields, gauge_heat_flow, identity_residuals,
                    master_equation_residual, spatial_identity_residuals, transport_frames,
                    wave_tension_field, _interior)
from .harmonic import admissibility_report, construct_admissible
from .heat import HeatConfig, run_heat_flow, verify_heat_monotonicity
from .spectrum import assemble_magnetic_operator, min_eigenvalue
from .wave import (Bump, WaveConfig, distance_to, energy_drift, perturb, run_wave_map)


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    note: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        s = f"[{tag}] {self.name}: {self.value:.6g} (threshold {self.threshold:.6g})"
        return s + (f" {self.note}" if self.note else "")


@dataclass
class RunReport:
    experiment: str
    config_hash: str
    sections: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    artifacts: list = field(default_factory=list)
    failed_stage: str | None = None

    def check(self, name, value, threshold, ok, note=""):
        self.checks.append(Check(name, bool(ok), float(value), float(threshold), note))

    @property
    def passed(self):
        return self.failed_stage is None and all(c.passed for c in self.checks)

    def to_dict(self, wall_clock=True):
        d = {"experiment": self.experiment, "config_hash": self.config_hash,
             "sections": self.sections, "passed": self.passed,
             "checks": [c.__dict__ for c in self.checks],
             "artifacts": sorted(self.artifacts), "failed_stage": self.failed_stage}
        if wall_clock:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def command_output(self):
        fit = self.sections.get("fit")
        return f"delta={fit['delta']:.10g} r2={fit['r2']:.10g}" if fit else ""

    def write(self, out):
        p = io.write_json(Path(out) / f"{self.experiment}_report.json", self.to_dict(),
                          self.config_hash)
        return p


def decay_fit(s, values, window):
    """Least-squares line through ``(s, log value)`` on ``window``; returns ``(delta, r2)``.

    ``delta`` is the negated slope.  Needs at least 5 points in the window and
    positive values there.
    """
    s = np.asarray(s, dtype=float)
    v = np.asarray(values, dtype=float)
    lo, hi = window
    m = (s >= lo) & (s <= hi)
    if np.count_nonzero(m) < 5:
        raise FitDomainError(f"need at least 5 points in [{lo}, {hi}], got {np.count_nonzero(m)}")
    if np.any(~(v[m] > 0)):
        raise FitDomainError("values in the fit window must be positive")
    x, y = s[m], np.log(v[m])
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-coef[0]), float(r2)


def _setup(cfg: ExperimentConfig, mu=None):
    g = cfg.grid.build()
    Q = construct_admissible(cfg.for_mu(cfg.map.mu if mu is None else mu), g)
    return g, Q


def _stage(report, name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except HyperwaveError as exc:
        report.failed_stage = name
        report.sections["error"] = {"stage": name, "type": type(exc).__name__, "message": str(exc)}
        exc.report = report  # lets the caller write the partial report
        raise


def _timed(fn):
    def run(cfg, out, *a, **kw):
        t0 = time.perf_counter()
        rep = fn(cfg, out, *a, **kw)
        rep.wall_clock_s = time.perf_counter() - t0
        return rep
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _sup_integral(diag):
    """``int ||d_s u||_inf ds`` by the trapezoid rule over the diagnostic rows."""
    s, sup = diag[:, 0], diag[:, 3]
    return float(np.sum(0.5 * np.diff(s) * (sup[1:] + sup[:-1])))


def _tail(diag):
    # geometric tail beyond the last row, rate fitted on the last half of the run
    s, sup = diag[:, 0], diag[:, 3]
    S = s[-1]
    m = (s >= 0.5 * S) & (sup > 0)
    if np.count_nonzero(m) < 5 or sup[-1] <= 0:
        return 0.0
    rate = -np.polyfit(s[m], np.log(sup[m]), 1)[0]
    return float(sup[-1] / rate) if rate > 0 else math.inf


def heat_bound(traj):
    """Discrete ``int_0^inf ||d_s u||_inf ds`` plus the distance of the end state to ``Q``."""
    return _sup_integral(traj.diagnostics) + _tail(traj.diagnostics) + traj.final_sup_distance


@_timed
def cmd_heatflow(cfg: ExperimentConfig, out, window=(2.0, 10.0)) -> RunReport:
    """Heat flow from ``Q + bump``: energy law, monotonicity and decay rate."""
    h = config_hash(cfg)
    rep = RunReport("heatflow", h)
    out = Path(out)
    g, Q = _setup(cfg)
    u0 = perturb(Q, cfg.bump).u
    traj = _stage(rep, "heat", run_heat_flow, u0, Q, cfg.heat)
    rep.artifacts.append(str(io.write_heat_diagnostics(out / "heat_diagnostics.csv", traj, h)))
    for sn in (traj.snapshots[0], traj.snapshots[-1]):
        rep.artifacts.append(str(io.write_map_field(out / f"heat_u_s{sn.s:.6g}.csv", sn.u, h)))
    mono = verify_heat_monotonicity(traj)
    rep.sections["energy"] = mono
    rep.sections["run"] = {"steps": traj.steps, "ds": traj.ds, "converged": traj.converged,
                           "s_end": float(traj.diagnostics[-1, 0]),
                           "final_sup_distance": traj.final_sup_distance}
    t2 = mono["tau_l2_sq_initial"]
    rep.check("energy law residual / |tau|_2^2(0)", mono["energy_law_residual"] / t2, 0.05,
              mono["energy_law_residual"] <= 0.05 * t2)
    rep.check("energy max increase / E(0)", mono["energy_max_increase"] / mono["energy_initial"],
              1e-10, mono["energy_max_increase"] <= 1e-10 * mono["energy_initial"])
    s, l2 = traj.diagnostics[:, 0], traj.diagnostics[:, 2]
    try:
        delta, r2 = decay_fit(s, l2, window)
        rep.sections["decay_fit"] = {"window": list(window), "delta": delta, "r2": r2}
        rep.check(f"decay rate of |d_s u|_2 on {list(window)}", delta, 0.2, delta >= 0.2)
    except FitDomainError as exc:
        rep.sections["decay_fit"] = {"window": list(window), "error": str(exc)}
        rep.check(f"decay rate of |d_s u|_2 on {list(window)}", float("nan"), 0.2, False,
                  note=str(exc))
    return rep


@_timed
def cmd_wavemap(cfg: ExperimentConfig, out) -> RunReport:
    """Wave map from ``(Q + bump, 0)``: energy conservation and distance series."""
    h = config_hash(cfg)
    rep = RunReport("wavemap", h)
    out = Path(out)
    g, Q = _setup(cfg)
    st = _stage(rep, "perturb", perturb, Q, cfg.bump, cfg.wave.t_max, cfg.strict_light_cone)
    run = _stage(rep, "wave", run_wave_map, st, cfg.wave, Q)
    rep.artifacts.append(str(io.write_wave_series(out / "wave_series.csv", run, h)))
    for t, s in (run.samples[0], run.samples[-1]):
        rep.artifacts.append(str(io.write_map_field(out / f"wave_u_t{t:.6g}.csv", s.u, h)))
        rep.artifacts.append(str(io.write_fields(out / f"wave_v_t{t:.6g}.csv", g,
                                                 {"v1": s.v[0], "v2": s.v[1]}, h)))
    spread, drift = energy_drift(run)
    rep.sections["energy"] = {"spread": spread, "fitted_drift": drift, "steps": run.steps,
                              "dt": run.dt}
    rep.sections["series"] = run.series
    rep.check("relative energy spread", spread, 1e-3, spread <= 1e-3)
    return rep


def gauge_slices(Q, bump: Bump, sampling: GaugeSampling, heat_safety=0.9, cfl=0.5,
                 require_converged=True, wave_dt=None):
    """Gauge trajectories of heat flows started from the wave map at ``sampling.times()``."""
    ts = sampling.times()
    run = run_wave_map(perturb(Q, bump), WaveConfig(t_max=ts[-1], cfl=cfl, sample_times=ts,
                                                    bump=bump), Q, dt=wave_dt)
    hc = HeatConfig(s_max=sampling.s_max, ds_safety=heat_safety, snapshot_s=sampling.ladder(),
                    stop_tol=sampling.stop_tol)
    out = []
    for t, st in run.samples:
        if t < ts[0] - 1e-12:
            continue
        tr = gauge_heat_flow(st.u, Q, hc)
        out.append(transport_frames(tr, Q, require_converged=require_converged, t=t))
    return compute_gauge_fields(out)


@_timed
def cmd_gauge(cfg: ExperimentConfig, out) -> RunReport:
    """Caloric gauge on five time slices: identities, ``a_t`` formula and master equation."""
    h = config_hash(cfg)
    rep = RunReport("gauge", h)
    out = Path(out)
    g, Q = _setup(cfg)
    sl = _stage(rep, "gauge", gauge_slices, Q, cfg.bump, cfg.gauge, cfg.heat.ds_safety,
                cfg.wave.cfl)
    k = len(sl) // 2
    c = sl[k]
    rep.sections["frames"] = {
        "orthonormality_defect": max(s.orthonormality_defect for s in sl),
        "det_defect": max(s.det_defect for s in sl),
        "reorthonormalizations": sum(s.reorthonormalizations for s in sl),
        "s_end": [float(s.s[-1]) for s in sl],
    }
    ir = identity_residuals(sl, k)
    rep.sections["identities"] = ir
    rep.sections["limit_divergence_residual"] = c.limit.div_identity_residual
    od = rep.sections["frames"]["orthonormality_defect"]
    rep.check("frame orthonormality defect", od, 1e-8, od <= 1e-8)
    rep.check("a_t integral residual / allowance", ir["at_integral_residual"] / ir["at_allowance"],
              1.0, ir["at_integral_residual"] <= ir["at_allowance"])
    masters = []
    if len(sl) >= 5:
        for s in cfg.gauge.s_values:
            mr = master_equation_residual(sl, s, 0.01)
            masters.append(mr)
            rep.check(f"master equation residual x10 / largest term at s={s}",
                      10 * mr["residual"] / mr["max_term"], 1.0,
                      10 * mr["residual"] <= mr["max_term"])
        rep.artifacts.append(str(io.write_csv(
            out / "master_terms.csv", ["s", "term_index", "l2_norm"],
            [(m["s"], i, v) for m in masters for i, v in enumerate(m["terms"].values())], h)))
    rep.sections["master_equation"] = masters
    W = wave_tension_field(sl, 0.0)
    m = _interior(g, 2)
    rep.sections["wave_tension_sup_s0"] = float(np.max(np.sqrt(np.sum(W**2, axis=0))[m]))
    rep.artifacts += [str(p) for p in io.write_gauge_bundle(out / "gauge", c, h,
                                                            [0.0] + list(cfg.gauge.s_values))]
    return rep


@_timed
def cmd_stability(cfg: ExperimentConfig, out) -> RunReport:
    """Perturbed wave map, then a heat flow and caloric gauge at every sample time.

    Reports the sup distance ``d(t)`` to ``Q``, the heat-flow bound
    ``int ||d_s u||_inf ds`` and their ratio, decay fits of the gauge
    fields and spatial identity residuals.
    """
    h = config_hash(cfg)
    rep = RunReport("stability", h)
    out = Path(out)
    g, Q = _setup(cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        adm = _stage(rep, "admissibility", admissibility_report, Q, cfg.rho)
    rep.sections["admissibility"] = adm.to_dict()
    st0 = _stage(rep, "perturb", perturb, Q, cfg.bump, cfg.wave.t_max, cfg.strict_light_cone)
    run = _stage(rep, "wave", run_wave_map, st0, cfg.wave, Q)
    rep.artifacts.append(str(io.write_wave_series(out / "wave_series.csv", run, h)))
    hc = cfg.stability_heat or cfg.heat
    hc = HeatConfig(s_max=hc.s_max, ds_safety=hc.ds_safety, stop_tol=hc.stop_tol,
                    snapshot_s=[s for s in np.round(np.arange(0.0, hc.s_max + 1e-9, 0.25), 10)])
    rows, fits, idents = [], [], []
    for t, st in run.samples:
        tr = _stage(rep, f"heat(t={t:.4g})", gauge_heat_flow, st.u, Q, hc)
        d = float(np.max(distance_to(st.u, Q)))
        bound = heat_bound(tr)
        rows.append((t, d, bound, d / bound if bound > 0 else 0.0, float(tr.converged),
                     tr.steps))
        rep.artifacts.append(str(io.write_heat_diagnostics(
            out / "heat" / f"heat_t{t:.6g}.csv", tr, h)))
        gt = _stage(rep, f"gauge(t={t:.4g})", transport_frames, tr, Q,
                    require_converged=False, t=t)
        gt = compute_gauge_fields([gt])[0]
        m = _interior(g, 2)
        ss = gt.s
        phs = [math.sqrt(float(np.sum(np.where(m, np.sum(sn.phi_s**2, axis=0), 0.0)
                                      * g.quad_weights))) for sn in gt.snapshots]
        ws = (max(2.0, 0.0), min(10.0, float(ss[-1])))
        try:
            dlt, r2 = decay_fit(ss, phs, ws)
        except FitDomainError:
            dlt, r2 = float("nan"), float("nan")
        fits.append({"t": t, "window": list(ws), "delta_phi_s_l2": dlt, "r2": r2})
        ir = spatial_identity_residuals(gt)
        idents.append({"t": t, **ir, "orthonormality_defect": gt.orthonormality_defect})
    rep.artifacts.append(str(io.write_csv(
        out / "stability_series.csv",
        ["t", "sup_dist", "heat_bound", "ratio", "heat_converged", "heat_steps"], rows, h)))
    rows = np.array(rows)
    rep.sections["series"] = rows[:, :4]
    rep.sections["gauge_decay_fits"] = fits
    rep.sections["identity_residuals"] = idents
    d0, dT = rows[0, 1], rows[-1, 1]
    if d0 > 0:
        rep.check("d(t_max) / d(0)", dT / d0, 0.5, dT <= 0.5 * d0)
    else:
        rep.check("d(t) identically zero", float(np.max(rows[:, 1])), 0.0,
                  bool(np.all(rows[:, 1] == 0.0)))
    worst = float(np.max(rows[:, 3]))
    rep.check("max d(t) / heat bound", worst, 1.05, worst <= 1.05)
    rep.check("heat flows converged", float(np.min(rows[:, 4])), 1.0, bool(np.all(rows[:, 4] > 0)))
    if cfg.bump.amplitude != 0:
        half = Bump(cfg.bump.center, cfg.bump.width, 0.5 * cfg.bump.amplitude,
                    cfg.bump.component, cfg.bump.cutoff, cfg.bump.taper)
        dh = float(np.max(distance_to(perturb(Q, half).u, Q)))
        lin = abs(dh / d0 - 0.5) / 0.5
        rep.sections["half_amplitude_d0"] = dh
        rep.check("half amplitude halves d(0), relative deviation", lin, 0.05, lin <= 0.05)
    return rep


@_timed
def cmd_spectrum(cfg: ExperimentConfig, out, gap_tol=0.05) -> RunReport:
    """``lambda_min(-lap + W)`` at ``Q_mu`` for every ``mu`` of the sweep."""
    h = config_hash(cfg)
    rep = RunReport("spectrum", h)
    out = Path(out)
    rows, results = [], []
    g = cfg.grid.build()
    try:
        lap = min_eigenvalue(assemble_magnetic_operator(construct_admissible(cfg.for_mu(0.0), g),
                                                        with_W=False))
        gap = lap.lambda_min
    except HyperwaveError as exc:
        gap = float("nan")
        rep.sections["laplacian_error"] = str(exc)
    rep.sections["dirichlet_gap"] = gap
    for mu in cfg.spectrum_mu:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                op = assemble_magnetic_operator(construct_admissible(cfg.for_mu(mu), g))
            er = min_eigenvalue(op)
            rows.append((mu, er.lambda_min, er.defect))
            results.append({"mu": mu, "lambda_min": er.lambda_min, "defect": er.defect,
                            "iterations": er.iterations, "converged": er.converged,
                            "positive_definite": er.positive_definite})
        except HyperwaveError as exc:
            rows.append((mu, float("nan"), float("nan")))
            results.append({"mu": mu, "error": f"{type(exc).__name__}: {exc}"})
    rep.artifacts.append(str(io.write_csv(out / "spectrum_sweep.csv",
                                          ["mu", "lambda_min", "defect"], rows, h)))
    rep.sections["sweep"] = results
    for r in results:
        if "error" in r:
            rep.check(f"lambda_min at mu={r['mu']}", float("nan"), 0.0, False, note=r["error"])
            continue
        rep.check(f"symmetry defect at mu={r['mu']}", r["defect"], 1e-12, r["defect"] <= 1e-12)
        if r["mu"] == 0.0:
            rel = abs(r["lambda_min"] - gap) / gap
            rep.check("lambda_min(mu=0) vs Dirichlet gap, relative", rel, gap_tol, rel <= gap_tol)
        else:
            rep.check(f"lambda_min at mu={r['mu']}", r["lambda_min"], 0.0,
                      r["lambda_min"] > 0 and r["converged"])
    return rep


@_timed
def cmd_decay_fit(cfg: ExperimentConfig, out, series, window, column=None) -> RunReport:
    """Fit ``delta`` to a CSV series (first column ``s``; value column by name or the second)."""
    h = config_hash(cfg) if cfg is not None else "none"
    rep = RunReport("decay_fit", h)
    header, data, _ = io.read_csv(series)
    j = header.index(column) if column else 1
    delta, r2 = decay_fit(data[:, 0], data[:, j], window)
    rep.sections["fit"] = {"series": str(series), "column": header[j], "window": list(window),
                           "delta": delta, "r2": r2}
    return rep


@_timed
def cmd_audit(cfg: ExperimentConfig, out) -> RunReport:
    """Re-verify that every artifact in ``out`` carries this config's hash."""
    h = config_hash(cfg)
    rep = RunReport("audit", h)
    ok, details = io.audit_directory(out, h)
    rep.sections["files"] = details
    bad = [k for k, v in details.items() if isinstance(v, str) or v != [h]]
    rep.check("artifacts with a foreign or missing hash", len(bad), 0, ok and not bad,
              note=", ".join(bad[:5]))
    return rep


COMMANDS = {
    "stability": cmd_stability,
    "heatflow": cmd_heatflow,
    "wavemap": cmd_wavemap,
    "gauge": cmd_gauge,
    "spectrum": cmd_spectrum,
    "decay-fit": cmd_decay_fit,
    "audit": cmd_audit,
}
