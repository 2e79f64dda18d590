"""YAML run configuration for the command-line tools.

Every key is checked against a schema before anything runs, and errors carry
the file name and line of the offending entry. Command-line flags override
file values, which override the defaults below.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .agent import TrainingConfig
from .p2c import SCOPES, P2cConfig

DEFAULT_BETAS = (0.1, 0.5, 1.0, 2.0)


class ConfigError(ValueError):
    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(str(self))

    def __str__(self):
        where = self.source or "<config>"
        if self.line is not None:
            where += f":{self.line}"
        return f"{where}: {self.message}"


@dataclass
class SimulationSection:
    rho: float = 0.5
    phases: int = 25
    phase_size: int = 1000
    mean_lifetime: float = 100.0
    seed: int = 0


@dataclass
class AgentSection:
    kind: str = "hadrl"
    betas: list[float] = field(default_factory=lambda: list(DEFAULT_BETAS))


@dataclass
class BaselineSection:
    rhos: list[float] = field(default_factory=lambda: [0.5, 0.8, 0.9, 1.0])
    phases: int = 10
    warmup_phases: int | None = None


@dataclass
class ValidationSection:
    rho: float = 0.8
    arrivals: int = 10_000
    use_heuristic: bool = False


@dataclass
class TimingSection:
    batch: int = 100
    vnf_counts: list[int] = field(default_factory=lambda: [5, 10, 15, 20])
    server_scales: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0])


@dataclass
class RunConfig:
    simulation: SimulationSection = field(default_factory=SimulationSection)
    agent: AgentSection = field(default_factory=AgentSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    heuristic: P2cConfig = field(default_factory=P2cConfig)
    validation: ValidationSection = field(default_factory=ValidationSection)
    timing: TimingSection = field(default_factory=TimingSection)
    topology: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "simulation": SimulationSection,
    "agent": AgentSection,
    "baseline": BaselineSection,
    "training": TrainingConfig,
    "heuristic": P2cConfig,
    "validation": ValidationSection,
    "timing": TimingSection,
}

_POSITIVE = {"rho", "phases", "phase_size", "mean_lifetime", "arrivals", "batch", "actor_lr", "critic_lr", "beta"}
_CHOICES = {
    ("agent", "kind"): ("drl", "hadrl"),
    ("training", "optimizer"): ("adam", "sgd"),
    ("training", "precision"): ("float32", "float64"),
    ("heuristic", "candidate_scope"): SCOPES,
}


def _expected_type(section: str, name: str):
    hints = {f.name: f.type for f in fields(_SECTIONS[section])}
    hint = str(hints[name])
    if hint.startswith("list[int]"):
        return "int-list"
    if hint.startswith("list[float]"):
        return "float-list"
    for key in ("bool", "int", "float", "str"):
        if hint.startswith(key):
            return key
    return "any"


def _check_scalar(kind: str, value) -> bool:
    if kind == "bool":
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if kind == "int":
        return isinstance(value, int)
    if kind == "float":
        return isinstance(value, (int, float))
    if kind == "str":
        return isinstance(value, str)
    return True


def _convert(section: str, name: str, value, source: str, line: int):
    kind = _expected_type(section, name)
    if kind.endswith("-list"):
        item = kind.split("-")[0]
        if not isinstance(value, list) or not value or not all(_check_scalar(item, v) for v in value):
            raise ConfigError(f"{section}.{name} must be a non-empty list of {item} values", source, line)
        value = [float(v) if item == "float" else v for v in value]
        if name in ("betas", "rhos", "server_scales", "vnf_counts") and any(v <= 0 for v in value):
            raise ConfigError(f"{section}.{name} values must be positive", source, line)
        return value
    if value is None and (section, name) in (("heuristic", "seed"), ("baseline", "warmup_phases")):
        return None
    if not _check_scalar(kind, value):
        raise ConfigError(f"{section}.{name} must be of type {kind}, got {value!r}", source, line)
    if kind == "float":
        value = float(value)
    if name == "warmup_phases" and value < 0:
        raise ConfigError(f"{section}.{name} must be >= 0", source, line)
    if name in _POSITIVE and value <= 0:
        raise ConfigError(f"{section}.{name} must be positive, got {value!r}", source, line)
    choices = _CHOICES.get((section, name))
    if choices and value not in choices:
        raise ConfigError(f"{section}.{name} must be one of {list(choices)}, got {value!r}", source, line)
    return value


def _line(node) -> int:
    return node.start_mark.line + 1


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}", source,
                          mark.line + 1 if mark else None) from None
    cfg = RunConfig()
    if root is None:
        return cfg
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("top level must be a mapping", source, _line(root))
    seen = set()
    for key_node, value_node in root.value:
        key = key_node.value
        if key in seen:
            raise ConfigError(f"duplicate section {key!r}", source, _line(key_node))
        seen.add(key)
        if key == "topology":
            value = yaml.safe_load(yaml.serialize(value_node))
            if value is not None and not isinstance(value, str):
                raise ConfigError("topology must be a file path or null", source, _line(value_node))
            cfg.topology = value
            continue
        if key not in _SECTIONS:
            raise ConfigError(f"unknown section {key!r}; expected one of {sorted(_SECTIONS) + ['topology']}",
                              source, _line(key_node))
        if not isinstance(value_node, yaml.MappingNode):
            raise ConfigError(f"section {key!r} must be a mapping", source, _line(value_node))
        names = {f.name for f in fields(_SECTIONS[key])}
        values = {}
        for k_node, v_node in value_node.value:
            name = k_node.value
            if name not in names:
                raise ConfigError(f"unknown key {name!r} in section {key!r}; expected one of {sorted(names)}",
                                  source, _line(k_node))
            if name in values:
                raise ConfigError(f"duplicate key {name!r} in section {key!r}", source, _line(k_node))
            raw = yaml.safe_load(yaml.serialize(v_node))
            values[name] = _convert(key, name, raw, source, _line(v_node))
        try:
            setattr(cfg, key, _SECTIONS[key](**{**asdict(getattr(cfg, key)), **values}))
        except ValueError as exc:
            raise ConfigError(f"section {key!r}: {exc}", source, _line(key_node)) from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path))


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Set ``section.key`` entries (passed as ``section__key``) that are not None."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, name = dotted.split("__")
        value = _convert(section, name, value, "<command line>", None)
        current = getattr(cfg, section)
        try:
            setattr(cfg, section, type(current)(**{**asdict(current), name: value}))
        except ValueError as exc:
            raise ConfigError(f"--{name.replace('_', '-')}: {exc}", "<command line>") from None
    return cfg
