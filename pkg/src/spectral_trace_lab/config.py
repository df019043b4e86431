"""Experiment configuration: strict TOML parsing into plain dataclasses."""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import geometry
from .errors import InvalidArgument


class ConfigError(InvalidArgument):
    pass


@dataclass
class MetricConfig:
    family: str = "round-sphere"
    eps: float = 0.1
    profile: list = None
    amplitude: float = 0.1


@dataclass
class PotentialConfig:
    kind: str = "none"  # none | constant | cos | harmonics
    amplitude: float = 0.0
    coefficients: list = None  # [[l, m, c], ...]


@dataclass
class SolverConfig:
    L_max: int = 60
    extra_basis: int = 30


@dataclass
class TraceSection:
    abel_t_grid: list = None
    abel_model: str = "quadratic"
    partial_fraction: float = 0.5
    liouville: list = field(default_factory=lambda: [24, 32, 48])
    fit_heat: bool = True
    heat_t_grid: list = None


@dataclass
class GeodesicsSection:
    n: int = 100
    sigma_samples: int = 2048


@dataclass
class CurvatureSection:
    n_theta: int = 32
    n_phi: int = 32


@dataclass
class CheckSection:
    discrepancy: float = 2e-4
    relative: bool = False


@dataclass
class OutputSection:
    dir: str = "stlab-out"
    cache_dir: str = ".stlab-cache"


SECTIONS = {
    "metric": MetricConfig,
    "potential": PotentialConfig,
    "solver": SolverConfig,
    "trace": TraceSection,
    "geodesics": GeodesicsSection,
    "curvature": CurvatureSection,
    "check": CheckSection,
    "output": OutputSection,
}

FAMILIES = ("round-sphere", "zoll-of-revolution", "revolution", "control")
POTENTIALS = ("none", "constant", "cos", "harmonics")


@dataclass
class ExperimentConfig:
    metric: MetricConfig = field(default_factory=MetricConfig)
    potential: PotentialConfig = field(default_factory=PotentialConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    trace: TraceSection = field(default_factory=TraceSection)
    geodesics: GeodesicsSection = field(default_factory=GeodesicsSection)
    curvature: CurvatureSection = field(default_factory=CurvatureSection)
    check: CheckSection = field(default_factory=CheckSection)
    output: OutputSection = field(default_factory=OutputSection)

    def to_dict(self):
        return asdict(self)

    def digest(self, *sections):
        """SHA-256 of the canonical JSON of the named sections (all when empty)."""
        data = self.to_dict()
        if sections:
            data = {k: data[k] for k in sections}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()

    # ---------------------------------------------------------- builders

    def build_metric(self):
        m = self.metric
        if m.family == "round-sphere":
            return geometry.builtin_metric("round-sphere")
        if m.family == "zoll-of-revolution":
            if m.profile is not None:
                return geometry.builtin_metric("zoll-of-revolution", profile=m.profile)
            return geometry.builtin_metric("zoll-of-revolution", eps=m.eps)
        if m.family == "revolution":
            if m.profile is None:
                raise ConfigError("metric.profile is required for family 'revolution'")
            return geometry.builtin_metric("revolution", profile=m.profile)
        return geometry.control_metric(m.amplitude)

    def build_potential(self):
        p = self.potential
        if p.kind == "none":
            return None
        if p.kind == "constant":
            return geometry.constant_field(p.amplitude)
        if p.kind == "cos":
            return geometry.cos_potential(p.amplitude)
        if not p.coefficients:
            raise ConfigError("potential.coefficients is required for kind 'harmonics'")
        table = {}
        for row in p.coefficients:
            if len(row) != 3:
                raise ConfigError(f"harmonic coefficient rows are [l, m, c], got {row!r}")
            l, m, c = row
            if int(l) != l or int(m) != m:
                raise ConfigError(f"harmonic indices must be integers, got {row!r}")
            table[(int(l), int(m))] = float(c)
        return geometry.harmonic_field(table, name="harmonics")


def _coerce(section, key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string")
        return value
    if not isinstance(value, list):
        raise ConfigError(f"{section}.{key} must be an array")
    return value


def _validate(cfg):
    if cfg.metric.family not in FAMILIES:
        raise ConfigError(f"metric.family must be one of {FAMILIES}, got {cfg.metric.family!r}")
    if cfg.metric.family == "zoll-of-revolution" and not abs(cfg.metric.eps) <= 0.3:
        raise ConfigError(f"metric.eps must satisfy |eps| <= 0.3, got {cfg.metric.eps}")
    if cfg.potential.kind not in POTENTIALS:
        raise ConfigError(f"potential.kind must be one of {POTENTIALS}, got {cfg.potential.kind!r}")
    if not 8 <= cfg.solver.L_max <= 2000:
        raise ConfigError(f"solver.L_max must lie in [8, 2000], got {cfg.solver.L_max}")
    if not 0 <= cfg.solver.extra_basis <= 500:
        raise ConfigError(f"solver.extra_basis must lie in [0, 500], got {cfg.solver.extra_basis}")
    if cfg.trace.abel_model not in ("quadratic", "puiseux"):
        raise ConfigError(f"trace.abel_model must be 'quadratic' or 'puiseux', got {cfg.trace.abel_model!r}")
    if not 0 < cfg.trace.partial_fraction <= 1:
        raise ConfigError("trace.partial_fraction must lie in (0, 1]")
    if len(cfg.trace.liouville) != 3 or any(int(v) != v or v < 2 for v in cfg.trace.liouville):
        raise ConfigError("trace.liouville must be three integers >= 2 (fibers, cos θ nodes, φ nodes)")
    for key in ("abel_t_grid", "heat_t_grid"):
        grid = getattr(cfg.trace, key)
        if grid is not None and (len(grid) < 5 or any(not isinstance(t, (int, float)) or t <= 0 for t in grid)):
            raise ConfigError(f"trace.{key} must list at least 5 positive numbers")
    if not 1 <= cfg.geodesics.n <= 100000:
        raise ConfigError("geodesics.n must lie in [1, 100000]")
    if not 16 <= cfg.geodesics.sigma_samples <= 65536:
        raise ConfigError("geodesics.sigma_samples must lie in [16, 65536]")
    if cfg.curvature.n_theta < 2 or cfg.curvature.n_phi < 1:
        raise ConfigError("curvature grid sizes must be positive")
    if not cfg.check.discrepancy > 0:
        raise ConfigError("check.discrepancy must be positive")


def parse_config(data):
    """Build an :class:`ExperimentConfig` from a parsed TOML mapping; unknown keys are errors."""
    cfg = ExperimentConfig()
    for section, body in data.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        target = getattr(cfg, section)
        defaults = SECTIONS[section]()
        for key, value in body.items():
            if not hasattr(defaults, key):
                raise ConfigError(f"unknown config key {section}.{key}")
            default = getattr(defaults, key)
            if default is None:
                if not isinstance(value, list):
                    raise ConfigError(f"{section}.{key} must be an array")
            else:
                value = _coerce(section, key, value, default)
            setattr(target, key, value)
    _validate(cfg)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    return parse_config(data)
