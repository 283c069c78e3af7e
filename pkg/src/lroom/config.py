"""Run configuration: flat key = value sections read with configparser.

Example::

    [domain]
    lx = 2
    ly = 2
    n_el = 15
    order = 4

    [source]
    x0 = 1
    y0 = 1
    sigma_g = 0.2

    [boundary]
    material = type=constant, Zs=5000     # or a material file path
    # top = walls/porous.mat              # per-tag override

    [weeks]
    sigma = 30
    b = 8000
    n_s = 3000
    t_end = 0.3
    dt = 1e-4                             # or c_cfl = 0.75

    [receivers]
    points = 0.2 0.2; 1.5 0.4

    [rom]
    samples = 500, 7500, 15500
    eps_pod = 1e-6
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, MissingArtifactError
from .materials import parse_material, read_material
from .operators import AIR_DENSITY, SPEED_OF_SOUND, SourceConfig
from .weeks import WeeksParams

BOUNDARY_TAGS = ("bottom", "right", "top", "left")


@dataclass
class RunConfig:
    lx: float = 2.0
    ly: float = 2.0
    n_el: int = 15
    order: int = 4
    c: float = SPEED_OF_SOUND
    rho: float = AIR_DENSITY
    source: SourceConfig = field(default_factory=lambda: SourceConfig(1.0, 1.0, 0.2))
    materials: dict = field(default_factory=dict)     # tag -> model (missing tags are rigid)
    weeks: WeeksParams = field(default_factory=lambda: WeeksParams(30.0, 8000.0, 3000))
    t_end: float = 0.3
    dt: float | None = 1e-4
    c_cfl: float | None = None
    receivers: list = field(default_factory=lambda: [(0.2, 0.2)])
    samples: list = field(default_factory=list)
    eps_pod: float | None = 1e-6
    n_rb: int | None = None
    parameter: str = "zs"            # zs | thickness
    sigma_mat: float = 10000.0
    admittance_mode: str = "accumulator"
    threads: int = 1
    seed: int = 0
    out: Path = Path("out")
    source_path: Path | None = None

    def validate(self):
        if self.lx <= 0 or self.ly <= 0 or self.n_el < 1:
            raise ConfigurationError("domain extents and element count must be positive")
        if (self.dt is None) == (self.c_cfl is None):
            raise ConfigurationError("give exactly one of weeks.dt and weeks.c_cfl")
        for x, y in self.receivers:
            if not (0 <= x <= self.lx and 0 <= y <= self.ly):
                raise ConfigurationError(f"receiver ({x}, {y}) lies outside the domain")
        if not (0 <= self.source.x0 <= self.lx and 0 <= self.source.y0 <= self.ly):
            raise ConfigurationError("source lies outside the domain")
        if self.admittance_mode not in ("accumulator", "direct"):
            raise ConfigurationError(f"unknown admittance mode {self.admittance_mode!r}")
        if self.parameter not in ("zs", "thickness"):
            raise ConfigurationError(f"unknown ROM parameter {self.parameter!r}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        return self


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _material(value: str, base: Path):
    if "=" in value:
        return parse_material(value)
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    return read_material(p)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise MissingArtifactError(f"config file {p} not found")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(p.read_text())
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse {p}: {exc}") from None
    return config_from_parser(cp, p.parent, p)


def config_from_parser(cp: configparser.ConfigParser, base: Path = Path("."), source_path=None) -> RunConfig:
    cfg = RunConfig(source_path=source_path)
    get = lambda sec, key, fb=None: cp.get(sec, key, fallback=fb) if cp.has_section(sec) else fb  # noqa: E731
    try:
        cfg.lx = float(get("domain", "lx", cfg.lx))
        cfg.ly = float(get("domain", "ly", cfg.ly))
        cfg.n_el = int(get("domain", "n_el", cfg.n_el))
        cfg.order = int(get("domain", "order", cfg.order))
        cfg.c = float(get("physics", "c", cfg.c))
        cfg.rho = float(get("physics", "rho", cfg.rho))
        cfg.source = SourceConfig(float(get("source", "x0", 1.0)), float(get("source", "y0", 1.0)),
                                  float(get("source", "sigma_g", 0.2)))
        if cp.has_section("boundary"):
            default = cp.get("boundary", "material", fallback=None)
            for tag in BOUNDARY_TAGS:
                value = cp.get("boundary", tag, fallback=default)
                if value:
                    cfg.materials[tag] = _material(value, base)
        sigma = float(get("weeks", "sigma", cfg.weeks.sigma))
        b = float(get("weeks", "b", cfg.weeks.b))
        ns = int(get("weeks", "n_s", cfg.weeks.n_s))
        cfg.weeks = WeeksParams(sigma, b, ns)
        cfg.t_end = float(get("weeks", "t_end", cfg.t_end))
        dt, ccfl = get("weeks", "dt"), get("weeks", "c_cfl")
        cfg.dt = float(dt) if dt is not None else (None if ccfl is not None else cfg.dt)
        cfg.c_cfl = float(ccfl) if ccfl is not None else None
        pts = get("receivers", "points")
        if pts:
            cfg.receivers = []
            for chunk in pts.split(";"):
                xy = chunk.split()
                if len(xy) != 2:
                    raise ConfigurationError(f"receiver entry {chunk!r} needs 'x y'")
                cfg.receivers.append((float(xy[0]), float(xy[1])))
        samples = get("rom", "samples")
        cfg.samples = _floats(samples) if samples else []
        eps, nrb = get("rom", "eps_pod"), get("rom", "n_rb")
        if eps is not None and nrb is not None:
            raise ConfigurationError("give only one of rom.eps_pod and rom.n_rb")
        cfg.n_rb = int(nrb) if nrb is not None else None
        cfg.eps_pod = float(eps) if eps is not None else (None if nrb is not None else cfg.eps_pod)
        cfg.parameter = get("rom", "parameter", cfg.parameter)
        cfg.sigma_mat = float(get("rom", "sigma_mat", cfg.sigma_mat))
        cfg.admittance_mode = get("run", "admittance", cfg.admittance_mode)
        cfg.threads = int(get("run", "threads", cfg.threads))
        cfg.seed = int(get("run", "seed", cfg.seed))
        cfg.out = Path(get("output", "dir", str(cfg.out)))
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"bad value in config: {exc}") from None
    return cfg.validate()
