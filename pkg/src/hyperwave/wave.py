"""Wave maps into the hyperbolic plane: leapfrog integration and perturbed data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import BlowUpError, ConfigError, HyperwaveError
from .geometry import DomainPoint, hyp_distance
from .grid import Grid, MapField, check_finite, integrate_volume
from .harmonic import energy_density_arrays


@dataclass(frozen=True)
class Bump:
    """Gaussian ``amplitude * exp(-r^2 / width^2)`` in coordinate distance ``r``.

    The profile vanishes beyond ``cutoff`` widths.  Between ``taper`` and
    ``cutoff`` widths it is multiplied by a smooth (C-infinity) step, so the
    data has compact support without a jump at its edge; a hard cut would
    inject grid-scale waves whose size grows under refinement.
    """

    center: tuple = (0.0, 0.0)
    width: float = 0.5
    amplitude: float = 0.01
    component: int = 1
    cutoff: float = 3.0
    taper: float = 2.0

    def __post_init__(self):
        if self.component not in (1, 2):
            raise ConfigError(f"bump component must be 1 or 2, got {self.component}")
        if not self.width > 0:
            raise ConfigError(f"bump width must be positive, got {self.width}")
        if not 0 < self.taper < self.cutoff:
            raise ConfigError(f"need 0 < taper < cutoff, got {self.taper}, {self.cutoff}")

    @property
    def support_radius(self):
        return self.cutoff * self.width

    @classmethod
    def from_json(cls, d):
        return cls(center=tuple(d.get("center", (0.0, 0.0))), width=float(d.get("width", 0.5)),
                   amplitude=float(d.get("amplitude", 0.01)),
                   component=int(d.get("component", 1)), cutoff=float(d.get("cutoff", 3.0)),
                   taper=float(d.get("taper", 2.0)))

    def profile(self, grid: Grid):
        r = grid.center_distance(*self.center)
        b = self.amplitude * np.exp(-(r / self.width) ** 2)
        return b * smooth_step((self.cutoff - r / self.width) / (self.cutoff - self.taper))


def smooth_step(x):
    """0 for ``x <= 0``, 1 for ``x >= 1``, C-infinity in between."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


@dataclass
class WaveState:
    u: MapField
    v: np.ndarray  # (2, n2, n1): d_t u^1, d_t u^2
    t: float = 0.0

    def copy(self):
        return WaveState(self.u.copy(), self.v.copy(), self.t)


@dataclass
class WaveConfig:
    t_max: float = 4.0
    cfl: float = 0.5
    sample_times: list = None
    bump: Bump = field(default_factory=Bump)
    energy_every: int = 1

    def __post_init__(self):
        if not 0 < self.cfl < 1:
            raise ConfigError(f"cfl must lie in (0, 1), got {self.cfl}")
        if not self.t_max >= 0:
            raise ConfigError(f"t_max must be non-negative, got {self.t_max}")
        if self.sample_times is None:
            self.sample_times = [0.0, self.t_max]
        self.sample_times = sorted(float(t) for t in self.sample_times if 0 <= t <= self.t_max)

    @classmethod
    def from_json(cls, d):
        kw = {k: d[k] for k in ("t_max", "cfl", "sample_times", "energy_every") if k in d}
        if "bump" in d:
            kw["bump"] = Bump.from_json(d["bump"])
        return cls(**kw)


def max_dt(grid: Grid, cfl=1.0):
    """CFL limit with the coordinate wave speed ``e^{x2}`` along ``x1``."""
    return cfl * min(grid.dx1 * math.exp(-grid.x2_max), grid.dx2)


def support_hyperbolic_radius(grid: Grid, bump: Bump, samples=720):
    """Largest hyperbolic distance from the bump center to its support circle."""
    th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    c1, c2 = bump.center
    p = DomainPoint(c1 + bump.support_radius * np.cos(th), c2 + bump.support_radius * np.sin(th))
    return float(np.max(hyp_distance(p, DomainPoint(c1, c2))))


def light_cone_margin(grid: Grid, bump: Bump):
    """Hyperbolic distance from the bump support to the nearest boundary node.

    Waves travel at unit hyperbolic speed, so data near the bump is free of
    boundary reflections for times below this margin (up to a factor 2 for the
    return trip).
    """
    c = DomainPoint(*bump.center)
    bd = hyp_distance(DomainPoint(grid.X1[grid.boundary_mask], grid.X2[grid.boundary_mask]), c)
    return float(np.min(bd) - support_hyperbolic_radius(grid, bump))


def perturb(Q: MapField, bump: Bump, t_max=None, strict=True) -> WaveState:
    """Initial data ``(Q + bump, 0)``.

    The bump support must lie strictly inside the grid.  With ``t_max`` given
    and ``strict`` set, the hyperbolic light-cone margin must also cover
    ``t_max``.
    """
    g = Q.grid
    c1, c2 = bump.center
    rho = bump.support_radius
    margin = min(c1 - rho - g.x1_min, g.x1_max - c1 - rho, c2 - rho - g.x2_min, g.x2_max - c2 - rho)
    if margin <= 0:
        raise ConfigError(f"bump support reaches the boundary layer (coordinate margin {margin:.4g})")
    if t_max is not None and strict:
        hm = light_cone_margin(g, bump)
        if hm < t_max:
            raise ConfigError(f"light-cone margin {hm:.4g} is below t_max={t_max:.4g}; "
                              "boundary reflections would reach the bump region")
    b = bump.profile(g)
    b[g.boundary_mask] = 0.0
    u1, u2 = Q.u1.copy(), Q.u2.copy()
    if bump.amplitude != 0:
        if bump.component == 1:
            u1 = u1 + b
        else:
            u2 = u2 + b
    return WaveState(MapField(g, u1, u2, Q), np.zeros((2,) + g.shape), 0.0)


def _tau(grid, u):
    t = np.zeros_like(u)
    _kernels.tension_into(u[0], u[1], grid.h, grid.dx1, grid.dx2, t[0], t[1])
    return t


def _accel(u, tau, v, interior):
    # a = tau(u) - Gbar(v, v): Gbar^1_12 = -1, Gbar^2_11 = e^{-2 u2}
    a = tau.copy()
    a[0] += 2.0 * v[0] * v[1]
    a[1] -= np.exp(-2.0 * u[1]) * v[0] * v[0]
    a *= interior
    return a


def _kick(u, tau, v, h, interior):
    # half-step velocity from one Picard correction of the midpoint rule
    pred = v + h * _accel(u, tau, v, interior)
    return v + h * _accel(u, tau, 0.5 * (v + pred), interior)


def _leapfrog(grid, u, v, tau, dt, interior):
    vh = _kick(u, tau, v, 0.5 * dt, interior)
    u = u + dt * vh
    tau = _tau(grid, u)
    v = _kick(u, tau, vh, 0.5 * dt, interior)
    return u, v, tau


def _check_dt(grid, dt, cfl=1.0):
    lim = max_dt(grid, cfl)
    if abs(dt) > lim * (1 + 1e-12):
        raise ConfigError(f"|dt|={abs(dt):.4g} violates the CFL limit {lim:.4g}")


def wave_step(state: WaveState, dt: float, cfl=0.99) -> WaveState:
    """One kick-drift-kick step; negative ``dt`` integrates backwards."""
    g = state.u.grid
    _check_dt(g, dt, cfl)
    u = state.u.stacked()
    interior = g.interior_mask.astype(float)
    u, v, _ = _leapfrog(g, u, state.v, _tau(g, u), dt, interior)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise BlowUpError(f"wave map blew up at t={state.t + dt:.6g}", step=1, time=state.t + dt)
    return WaveState(MapField(g, u[0], u[1], state.u.reference), v, state.t + dt)


def _energy(grid, u, v):
    dens = energy_density_arrays(grid, u[0], u[1])
    kin = np.exp(-2.0 * u[1]) * v[0] ** 2 + v[1] ** 2
    return 0.5 * integrate_volume(grid, dens + kin)


def wave_energy(state: WaveState) -> float:
    """``1/2 int (e^{-2 u2} (v1)^2 + (v2)^2 + |du|^2) dvol``."""
    return _energy(state.u.grid, state.u.stacked(), state.v)


def distance_to(u: MapField, Q: MapField):
    return hyp_distance(DomainPoint(u.u1, u.u2), DomainPoint(Q.u1, Q.u2))


@dataclass
class WaveRun:
    samples: list  # (t, WaveState)
    energy: np.ndarray  # rows (t, energy)
    series: np.ndarray  # rows (t, energy, sup_dist, l2_dist) at sample times
    dt: float
    steps: int


def run_wave_map(state0: WaveState, cfg: WaveConfig, Q: MapField | None = None,
                 dt=None) -> WaveRun:
    """Integrate to ``cfg.t_max`` with steps that land on the sample times."""
    g = state0.u.grid
    Q = Q if Q is not None else state0.u.reference
    if Q is None:
        raise HyperwaveError("a reference map is needed for the distance series")
    dt_max = dt if dt is not None else max_dt(g, cfg.cfl)
    _check_dt(g, dt_max)
    interior = g.interior_mask.astype(float)
    u = state0.u.stacked()
    v = np.array(state0.v, dtype=float)
    tau = _tau(g, u)
    t = state0.t
    stops = [s for s in cfg.sample_times if s > t] + [cfg.t_max]
    samples, energy, series = [], [], []
    steps = 0

    def sample():
        st = WaveState(MapField(g, u[0].copy(), u[1].copy(), Q), v.copy(), t)
        e = _energy(g, u, v)
        d = distance_to(st.u, Q)
        samples.append((t, st))
        series.append((t, e, float(np.max(d)), math.sqrt(integrate_volume(g, d * d))))

    if not cfg.sample_times or cfg.sample_times[0] <= t:
        sample()
    energy.append((t, _energy(g, u, v)))
    for stop in stops:
        if stop <= t:
            continue
        n = math.ceil((stop - t) / dt_max * (1 - 1e-12))
        h = (stop - t) / n
        t_start = t
        for k in range(1, n + 1):
            u, v, tau = _leapfrog(g, u, v, tau, h, interior)
            steps += 1
            t = t_start + k * h
            if steps % cfg.energy_every == 0:
                e = _energy(g, u, v)
                if not math.isfinite(e):
                    try:
                        check_finite(u, "wave state", g)
                        check_finite(v, "wave velocity", g)
                    except HyperwaveError as exc:
                        raise BlowUpError(f"wave map blew up at t={t:.6g}: {exc}",
                                          step=steps, time=t) from None
                    raise BlowUpError(f"wave map blew up at t={t:.6g}", step=steps, time=t)
                energy.append((t, e))
        t = stop
        if not samples or samples[-1][0] != t:
            sample()
    return WaveRun(samples, np.array(energy), np.array(series), dt_max, steps)


def energy_drift(run: WaveRun):
    """Relative spread ``(max E - min E) / E(0)`` and fitted drift ``|slope| t_max / E(0)``."""
    t, e = run.energy.T
    e0 = e[0] if e[0] != 0 else 1.0
    spread = float((e.max() - e.min()) / abs(e0))
    slope = np.polyfit(t, e, 1)[0] if len(t) > 1 and t[-1] > t[0] else 0.0
    return spread, float(abs(slope) * (t[-1] - t[0]) / abs(e0))


def max_wave_speed(grid: Grid):
    """Largest coordinate wave speed, ``e^{x2_max}`` along ``x1`` (1 along ``x2``)."""
    return max(math.exp(grid.x2_max), 1.0)


def outside_light_cone(grid: Grid, bump: Bump, t: float, hyperbolic=False):
    """Nodes beyond the bump's domain of influence at time ``t``.

    By default the cone is the coordinate disk of radius ``rho_0 + t c_max``
    (``c_max`` from :func:`max_wave_speed`); with ``hyperbolic`` it is the
    sharper hyperbolic ball of radius ``rho_H + t``.
    """
    if hyperbolic:
        r = hyp_distance(DomainPoint(grid.X1, grid.X2), DomainPoint(*bump.center))
        return r > support_hyperbolic_radius(grid, bump) + t
    return grid.center_distance(*bump.center) > bump.support_radius + t * max_wave_speed(grid)


def leakage(state: WaveState, background: WaveState, bump: Bump, hyperbolic=False):
    """Largest coordinate difference from the unperturbed run outside the light cone.

    ``background`` is the same integration started from the unperturbed
    map, so the slow drift of a discretely non-harmonic ``Q`` cancels.
    Returns ``(leak, n_outside)``.
    """
    g = state.u.grid
    mask = outside_light_cone(g, bump, state.t, hyperbolic) & g.interior_mask
    if not np.any(mask):
        return 0.0, 0
    d = np.abs(state.u.stacked() - background.u.stacked())[:, mask]
    return float(np.max(d)), int(np.count_nonzero(mask))


def time_reversal_error(state0: WaveState, t_end: float, dt: float) -> float:
    """Integrate to ``t_end`` with ``dt``, back with ``-dt``; sup distance to the start."""
    n = max(1, round(t_end / dt))
    st = state0
    for _ in range(n):
        st = wave_step(st, dt)
    for _ in range(n):
        st = wave_step(st, -dt)
    du = np.max(np.abs(st.u.stacked() - state0.u.stacked()))
    dv = np.max(np.abs(st.v - state0.v))
    return float(max(du, dv))
