"""Experiment configuration: one JSON document drives every subcommand."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .grid import MIN_NODES, Grid, build_grid
from .harmonic import DEFAULT_RHO, HolomorphicSpec
from .heat import HeatConfig, log_snapshots
from .wave import Bump, WaveConfig

_SECTIONS = ("name", "seed", "grid", "map", "rho", "bump", "heat", "wave", "gauge",
             "spectrum", "stability", "output")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj) -> str:
    """Short sha256 of the canonical JSON form.

    The output directory is not part of the hash: where results are written
    does not change what they are.
    """
    if isinstance(obj, ExperimentConfig):
        obj = obj.to_dict()
        obj.pop("output", None)
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


@dataclass
class GridSpec:
    x1_extent: float
    x2_extent: float
    n1: int
    n2: int

    def build(self) -> Grid:
        return build_grid(self.x1_extent, self.x2_extent, self.n1, self.n2)


@dataclass
class GaugeSampling:
    """Time slices ``t0 + k dt`` (``k = -2..2``) and the ``s`` ladder for gauge runs."""

    t0: float = 1.0
    dt: float = 0.05
    slices: int = 5
    s_values: list = field(default_factory=lambda: [0.25])
    s_max: float = 12.0
    stop_tol: float = 1e-6
    ladder_step: float = 0.05

    def times(self):
        half = self.slices // 2
        return [self.t0 + k * self.dt for k in range(-half, half + 1)]

    def ladder(self):
        """Log-spaced early snapshots, a uniform ladder, and ``s_values`` with neighbours."""
        pts = set(log_snapshots(min(1.0, self.s_max), 1e-4, 4))
        n = int(round(self.s_max / self.ladder_step))
        pts.update(round(k * self.ladder_step, 12) for k in range(n + 1))
        for s in self.s_values:
            pts.update((s - 0.01, s, s + 0.01))
        return sorted(p for p in pts if 0.0 <= p <= self.s_max)


@dataclass
class ExperimentConfig:
    name: str
    grid: GridSpec
    map: HolomorphicSpec
    bump: Bump
    heat: HeatConfig
    wave: WaveConfig
    gauge: GaugeSampling = field(default_factory=GaugeSampling)
    spectrum_mu: list = field(default_factory=lambda: [0.0, 0.05, 0.1, 0.2])
    stability_heat: HeatConfig | None = None
    rho: float = DEFAULT_RHO
    seed: int = 0
    output: str = "out"
    strict_light_cone: bool = False
    source: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        for key in ("grid", "map"):
            if key not in d:
                raise ConfigError(f"missing required section '{key}'")
        try:
            gs = GridSpec(float(d["grid"]["x1_extent"]), float(d["grid"]["x2_extent"]),
                          int(d["grid"]["n1"]), int(d["grid"]["n2"]))
            hol = HolomorphicSpec.from_json(d["map"])
            bump = Bump.from_json(d.get("bump", {}))
            heat = HeatConfig.from_json(d.get("heat", {}))
            wave = WaveConfig.from_json({**d.get("wave", {}), "bump": d.get("bump", {})})
            gauge = GaugeSampling(**d.get("gauge", {}))
            stab = d.get("stability", {})
            sheat = HeatConfig.from_json(stab["heat"]) if "heat" in stab else None
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed configuration: {exc}") from None
        cfg = cls(name=str(d.get("name", "experiment")), grid=gs, map=hol, bump=bump,
                  heat=heat, wave=wave, gauge=gauge,
                  spectrum_mu=[float(m) for m in d.get("spectrum", {}).get("mu", [0.0, 0.05, 0.1, 0.2])],
                  stability_heat=sheat, rho=float(d.get("rho", DEFAULT_RHO)),
                  seed=int(d.get("seed", 0)), output=str(d.get("output", "out")),
                  strict_light_cone=bool(stab.get("strict_light_cone", False)),
                  source=copy.deepcopy(d))
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(d)

    def validate(self):
        g = self.grid
        if g.n1 < MIN_NODES or g.n2 < MIN_NODES:
            raise ConfigError(f"grid needs at least {MIN_NODES} nodes per axis, got {g.n1}x{g.n2}")
        grid = g.build()
        c1, c2 = self.bump.center
        rho = self.bump.support_radius
        margin = min(c1 - rho - grid.x1_min, grid.x1_max - c1 - rho,
                     c2 - rho - grid.x2_min, grid.x2_max - c2 - rho)
        if margin <= 0:
            raise ConfigError(f"bump support leaves the grid interior (margin {margin:.4g})")
        if self.strict_light_cone:
            from .wave import light_cone_margin
            hm = light_cone_margin(grid, self.bump)
            if hm < self.wave.t_max:
                raise ConfigError(f"light-cone margin {hm:.4g} is below t_max={self.wave.t_max}")
        raw = self.source.get("heat", {}).get("snapshot_s")
        if raw is not None and any(s > self.heat.s_max or s < 0 for s in raw):
            raise ConfigError("heat snapshot_s must lie within [0, s_max]")
        if any(s > self.gauge.s_max or s < 0 for s in self.gauge.s_values):
            raise ConfigError("gauge s_values must lie within [0, gauge.s_max]")
        if self.gauge.slices < 3 or self.gauge.slices % 2 == 0:
            raise ConfigError("gauge.slices must be an odd number >= 3")
        if not self.gauge.dt > 0:
            raise ConfigError("gauge.dt must be positive")
        if self.gauge.t0 - (self.gauge.slices // 2) * self.gauge.dt < 0:
            raise ConfigError("gauge time slices reach t < 0")
        if self.gauge.t0 + (self.gauge.slices // 2) * self.gauge.dt > self.wave.t_max:
            raise ConfigError("gauge time slices reach beyond wave.t_max")
        if not self.spectrum_mu:
            raise ConfigError("spectrum.mu must list at least one value")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        return self

    def to_dict(self) -> dict:
        """The effective configuration, after overrides; this is what gets hashed."""
        d = copy.deepcopy(self.source)
        d["grid"] = {"x1_extent": self.grid.x1_extent, "x2_extent": self.grid.x2_extent,
                     "n1": self.grid.n1, "n2": self.grid.n2}
        d["output"] = self.output
        return d

    def with_resolution_scale(self, k: float) -> "ExperimentConfig":
        """Node spacing multiplied by ``k`` (``k = 4`` is the 4x coarsened variant)."""
        if not k > 0:
            raise ConfigError(f"resolution scale must be positive, got {k}")
        d = self.to_dict()
        for key in ("n1", "n2"):
            n = int(round((d["grid"][key] - 1) / k)) + 1
            if n < MIN_NODES:
                raise ConfigError(f"resolution scale {k} leaves {key}={n} < {MIN_NODES}")
            d["grid"][key] = n
        return ExperimentConfig.from_dict(d)

    def for_mu(self, mu: float) -> HolomorphicSpec:
        return HolomorphicSpec(self.map.coeffs, float(mu))
