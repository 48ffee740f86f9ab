"""Flat experiment configuration read from TOML or ``--key value`` flags."""

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .cache import canonical_json, config_digest
from .control_kernel import ControlRegion, SpaceWeight, TimeWeight
from .domains import TRAPEZOID, DomainSpec


class ConfigError(ValueError):
    pass


REGIONS = ("square_two_sides", "square_sides", "disc_radius_strip", "polygon_base_strip", "whole")
INPUTS = ("one_mode", "dirac", "box")


@dataclass
class ExperimentConfig:
    domain: str = "unit_square"
    vertices: list = field(default_factory=list)
    grid_n: int = 64
    basis: str = "exact"
    region: str = "square_two_sides"
    width: float = 0.2
    sides: list = field(default_factory=lambda: ["left", "top"])
    trunc: str = "none"
    r_cut: float = 0.5
    smooth_space: bool = False
    smooth_time: bool = False
    ramp_width: Optional[float] = None
    T: float = 3.0
    n_control: int = 100
    omega_control: Optional[float] = None
    n_verify: int = 2000
    input: str = "one_mode"
    mode: int = 50
    slot: str = "u0"
    point: list = field(default_factory=lambda: [0.5, 0.5])
    n_input: int = 100
    box: list = field(default_factory=lambda: [0.6, 0.8, 0.2, 0.4])
    box_angle: float = 0.0
    sweep_n: list = field(default_factory=list)
    sweep_T: list = field(default_factory=list)
    field_n: int = 0
    seed: int = 0
    output_dir: str = "humwave-out"
    cache_dir: str = ""
    name: str = ""

    # ------------------------------------------------------------ validation

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.domain not in ("unit_square", "unit_disc", "polygon", "trapezoid"):
            raise ConfigError(f"domain: unknown kind {self.domain!r}")
        if self.domain == "polygon" and len(self.vertices) < 3:
            raise ConfigError("vertices: a polygon needs at least three vertices")
        if self.basis not in ("exact", "fd"):
            raise ConfigError("basis: expected 'exact' or 'fd'")
        if self.basis == "exact" and self.domain in ("polygon", "trapezoid"):
            raise ConfigError("basis: polygons only have finite-difference bases")
        if self.region not in REGIONS:
            raise ConfigError(f"region: expected one of {REGIONS}")
        if self.input not in INPUTS:
            raise ConfigError(f"input: expected one of {INPUTS}")
        if not (isinstance(self.T, (int, float)) and self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T: must be a positive number")
        for key in ("n_control", "n_verify", "grid_n", "mode", "n_input"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be a positive integer")
        if self.omega_control is None and self.n_verify < self.n_control:
            raise ConfigError("n_verify: verification cutoff must not be below the control cutoff")
        if self.sweep_n and max(self.sweep_n) > self.n_verify:
            raise ConfigError("sweep_n: entries must not exceed n_verify")
        if self.sweep_T and float(self.T) not in [float(t) for t in self.sweep_T]:
            raise ConfigError("T: must be one of the sweep_T values")
        if self.input == "one_mode" and self.mode > self.n_verify:
            raise ConfigError("mode: outside the verification basis")
        if self.n_input > self.n_verify:
            raise ConfigError("n_input: must not exceed n_verify")
        try:
            self.space_weight()
            self.domain_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------ builders

    def domain_spec(self):
        if self.domain == "unit_square":
            return DomainSpec.square(self.grid_n)
        if self.domain == "unit_disc":
            return DomainSpec.disc(self.grid_n)
        verts = TRAPEZOID if self.domain == "trapezoid" else tuple(map(tuple, self.vertices))
        return DomainSpec("polygon", verts, self.grid_n)

    def control_region(self):
        if self.region == "whole":
            return ControlRegion("whole")
        if self.region == "square_two_sides":
            return ControlRegion.square_two_sides(self.width)
        if self.region == "square_sides":
            return ControlRegion("square_sides", self.width, tuple(self.sides))
        if self.region == "disc_radius_strip":
            return ControlRegion.disc_strip(self.width, self.trunc, self.r_cut)
        return ControlRegion.polygon_base(self.domain_spec().vertices, self.width)

    def space_weight(self):
        return SpaceWeight(self.control_region(), self.smooth_space, self.ramp_width)

    def time_weight(self, T=None):
        return TimeWeight(self.T if T is None else T, self.smooth_time)

    # ------------------------------------------------------------ serialisation

    def to_dict(self):
        return dataclasses.asdict(self)

    def canonical(self):
        """Key-sorted JSON of every field that affects results."""
        d = self.to_dict()
        for k in ("output_dir", "cache_dir", "name"):
            d.pop(k)
        return canonical_json(d)

    def digest(self):
        d = self.to_dict()
        for k in ("output_dir", "cache_dir", "name"):
            d.pop(k)
        return config_digest(d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, value):
    """Parse a CLI string into the type of field ``key``."""
    f = FIELDS[key]
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    if isinstance(value, str):
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        if isinstance(default, list):
            try:
                parsed = tomllib.loads(f"v = [{value.strip('[]')}]")["v"]
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{key}: cannot parse list {value!r}") from exc
            return parsed
        if isinstance(default, int) and not isinstance(default, bool):
            try:
                return int(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from exc
        if isinstance(default, float) or key in ("ramp_width", "omega_control"):
            if value.lower() in ("none", ""):
                return None
            try:
                return float(value)
            except ValueError as exc:
                raise ConfigError(f"{key}: expected a number, got {value!r}") from exc
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def from_mapping(data, base=None):
    unknown = sorted(set(data) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    values = (base or ExperimentConfig()).to_dict()
    for k, v in data.items():
        values[k] = _coerce(k, v)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, overrides=None):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = from_mapping(data)
    if overrides:
        cfg = from_mapping(overrides, cfg)
    return cfg
