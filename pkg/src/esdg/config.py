"""Experiment configuration files.

A configuration is a TOML document with four tables::

    name = "vortex2d"

    [mesh]      # domain, generator or MSH files, warp, refinement levels
    [run]       # study kind, degree(s), time stepping and scheme options
    [physics]   # gamma, initial condition and its parameters
    [output]    # output directory and diagnostics cadence

Every preset shipped with the package lives in ``esdg/presets`` and is
loaded with :func:`load_preset`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from .euler import GAMMA
from .geometry import WARPS
from .problems import PROBLEMS
from .solver import FLUX_MODES, RunConfig
from .wadg import FIXES, MASS_MODES, PROJECTION_MODES, TEST_FUNCTIONS

KINDS = ("run", "convergence", "projection_study", "geoterms_study")
MESH_SOURCES = ("box", "quasi_uniform", "msh")
METRIC_MODES = ("default", "exact2d", "cross", "curlN", "curlNp1")


class ConfigError(ValueError):
    pass


@dataclass
class MeshSection:
    """Mesh family description.

    ``levels`` are nominal mesh sizes.  Box meshes use
    ``round(extent / h)`` cells per axis; quasi-uniform meshes use h as
    the target edge length; MSH sources read one file per level from
    ``files`` (paths relative to the config file or the package data).
    """

    dim: int = 2
    source: str = "box"
    extents: list = field(default_factory=lambda: [[-1.0, 1.0], [-1.0, 1.0]])
    periodic: bool = True
    warp: str = "identity"
    levels: list = field(default_factory=lambda: [1.0])
    files: list = field(default_factory=list)

    def validate(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"mesh.dim must be 2 or 3, got {self.dim}")
        if self.source not in MESH_SOURCES:
            raise ConfigError(f"mesh.source must be one of {MESH_SOURCES}")
        if len(self.extents) != self.dim or any(len(e) != 2 or e[1] <= e[0]
                                                for e in self.extents):
            raise ConfigError("mesh.extents needs one increasing [lo, hi] pair per axis")
        if self.warp not in WARPS:
            raise ConfigError(f"unknown mesh.warp '{self.warp}'; choose from {sorted(WARPS)}")
        if not self.levels or any(not h > 0 for h in self.levels):
            raise ConfigError("mesh.levels must be a nonempty list of positive sizes")
        if self.source == "quasi_uniform" and self.dim != 2:
            raise ConfigError("quasi_uniform meshes are 2D only")
        if self.source == "msh" and len(self.files) != len(self.levels):
            raise ConfigError("mesh.files needs one MSH file per level")


@dataclass
class RunSection:
    kind: str = "run"
    degree: int | list = 3
    CFL: float = 0.5
    final_time: float = 1.0
    steps: int = 0
    flux: str = "ec+lf"
    mass_mode: str = "wadg"
    projection_mode: str = "wadg"
    conservation_fix: str = "polyJ"
    metric_mode: str = "default"

    @property
    def degrees(self) -> list:
        return list(self.degree) if isinstance(self.degree, list) else [self.degree]

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"run.kind must be one of {KINDS}")
        if not self.degrees or any(not isinstance(n, int) or n < 0 for n in self.degrees):
            raise ConfigError("run.degree must be a nonnegative integer or a list of them")
        if not self.CFL > 0:
            raise ConfigError("run.CFL must be positive")
        if not self.final_time >= 0:
            raise ConfigError("run.final_time must be nonnegative")
        if self.steps < 0:
            raise ConfigError("run.steps must be nonnegative")
        for name, value, allowed in (("flux", self.flux, FLUX_MODES),
                                     ("mass_mode", self.mass_mode, MASS_MODES),
                                     ("projection_mode", self.projection_mode, PROJECTION_MODES),
                                     ("conservation_fix", self.conservation_fix, FIXES),
                                     ("metric_mode", self.metric_mode, METRIC_MODES)):
            if value not in allowed:
                raise ConfigError(f"run.{name} must be one of {allowed}, got '{value}'")

    def solver_config(self, N: int, gamma: float, output_interval: float) -> RunConfig:
        return RunConfig(N=N, CFL=self.CFL, final_time=self.final_time, flux_mode=self.flux,
                         mass_mode=self.mass_mode, projection_mode=self.projection_mode,
                         conservation_fix=self.conservation_fix, gamma=gamma,
                         output_interval=output_interval,
                         metric_mode=None if self.metric_mode == "default" else self.metric_mode,
                         num_steps=self.steps or None)


@dataclass
class PhysicsSection:
    """``initial_condition`` names a problem, or a test function for
    projection studies; ``params`` are passed to it as keywords."""

    gamma: float = GAMMA
    initial_condition: str = "constant"
    params: dict = field(default_factory=dict)

    def validate(self, kind: str):
        if not self.gamma > 1:
            raise ConfigError("physics.gamma must exceed 1")
        names = TEST_FUNCTIONS if kind == "projection_study" else PROBLEMS
        if kind != "geoterms_study" and self.initial_condition not in names:
            raise ConfigError(f"unknown physics.initial_condition '{self.initial_condition}'; "
                              f"choose from {sorted(names)}")


@dataclass
class OutputSection:
    directory: str = "output"
    interval: float = 0.0
    snapshot: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    mesh: MeshSection = field(default_factory=MeshSection)
    run: RunSection = field(default_factory=RunSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path | None = field(default=None, compare=False)

    def validate(self) -> "ExperimentConfig":
        self.mesh.validate()
        self.run.validate()
        self.physics.validate(self.run.kind)
        if self.output.interval < 0:
            raise ConfigError("output.interval must be nonnegative")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir=None) -> "ExperimentConfig":
        data = dict(data)
        sections = {"mesh": MeshSection, "run": RunSection,
                    "physics": PhysicsSection, "output": OutputSection}
        kwargs = {}
        for key, value in data.items():
            if key == "name":
                kwargs["name"] = str(value)
            elif key in sections:
                kwargs[key] = _section(sections[key], key, value)
            else:
                raise ConfigError(f"unknown top-level key '{key}'")
        cfg = cls(**kwargs, base_dir=Path(base_dir) if base_dir else None)
        return cfg.validate()


def _section(klass, name: str, value):
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name: f for f in fields(klass)}
    for key in value:
        if key not in known:
            raise ConfigError(f"unknown key '{name}.{key}'")
    try:
        obj = klass(**value)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] table: {exc}") from None
    # integers are accepted where floats are expected
    for key, f in known.items():
        v = getattr(obj, key)
        if f.type in ("float",) and isinstance(v, int) and not isinstance(v, bool):
            setattr(obj, key, float(v))
        elif f.type == "float" and not isinstance(v, float):
            raise ConfigError(f"{name}.{key} must be a number")
    return obj


def loads(text: str, base_dir=None) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return ExperimentConfig.from_dict(data, base_dir)


def dumps(config: ExperimentConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config '{path}': {exc.strerror}") from None
    return loads(text, base_dir=path.parent)


def preset_names() -> list:
    root = resources.files("esdg") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("esdg") / "presets"
    res = root / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset '{name}'; choose from {preset_names()}")
    return loads(res.read_text(encoding="utf-8"), base_dir=Path(str(root)))


def load_any(spec: str) -> ExperimentConfig:
    """Load a config file path, or a preset by name."""
    if Path(spec).is_file():
        return load(spec)
    if spec.endswith(".toml"):
        raise ConfigError(f"config file '{spec}' not found")
    return load_preset(spec)


def _parse_value(text: str):
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def apply_overrides(config: ExperimentConfig, overrides) -> ExperimentConfig:
    """Apply ``section.key=value`` overrides; values use TOML syntax,
    bare words are taken as strings."""
    data = config.to_dict()
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override '{item}' must look like section.key=value")
        path = key.strip().split(".")
        target = data
        for part in path[:-1]:
            if not isinstance(target.get(part), dict):
                raise ConfigError(f"unknown config section in '{key}'")
            target = target[part]
        if path[-1] not in target and not (len(path) == 3 and path[1] == "params"):
            raise ConfigError(f"unknown config key '{key}'")
        target[path[-1]] = _parse_value(value.strip())
    return ExperimentConfig.from_dict(data, config.base_dir)


def resolve_file(config: ExperimentConfig, name: str) -> Path:
    p = Path(name)
    if not p.is_absolute() and config.base_dir is not None:
        p = config.base_dir / p
    if not p.is_file():
        raise ConfigError(f"mesh file '{name}' not found")
    return p
