"""Experiment configuration: schema, strict parsing, validation, overrides.

Config files are YAML with one nested section per subsystem. Every key maps
onto a field below; unknown keys are rejected so typos cannot silently fall
back to defaults.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .channel import ChannelModel
from .core import ConfigError, HyperSchedule
from .models import ModelSpec
from .robustness import AttackSpec, FailureSpec, ScreeningPolicy
from .selection import CensorPolicy

ALGORITHMS = ("dsl", "fl", "pso")


@dataclass(frozen=True)
class DataConfig:
    n_total: int = 6000
    sep: float = 2.5
    test_fraction: float = 0.2
    dirichlet_alpha: float = 0.5
    partition_mode: str = "dirichlet"
    shards_per_worker: int = 2
    global_fraction: float = 0.01
    global_split: float = 0.5
    share_global: bool = True
    standardize: bool = False
    csv_path: str | None = None

    def validate(self, prefix: str = "data"):
        if self.csv_path is None and self.n_total < 1:
            raise ConfigError(f"{prefix}.n_total must be >= 1, got {self.n_total}")
        if self.csv_path is None and not self.sep > 0:
            raise ConfigError(f"{prefix}.sep must be > 0, got {self.sep}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(
                f"{prefix}.test_fraction must be in (0, 1), got {self.test_fraction}"
            )
        # shard ranges are re-checked by PartitionSpec.validate at build time


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "data"  # data | sphere
    dim: int = 10
    radius: float = 1.0  # sphere target is drawn from U(-radius, radius)^dim

    def validate(self, prefix: str = "objective"):
        if self.kind not in ("data", "sphere"):
            raise ConfigError(f"{prefix}.kind must be data or sphere, got {self.kind!r}")
        if self.kind == "sphere" and self.dim < 1:
            raise ConfigError(f"{prefix}.dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "dsl"
    rounds: int = 200
    num_workers: int = 50
    seed: int = 1
    output_dir: str | None = None
    batch_size: int = 32  # 0 means full-batch gradients
    velocity_mode: str = "bi"  # bi | total
    coeff_mode: str = "scalar"  # scalar | per_coord pull coefficients
    init_scale: float = 0.05  # workers start at w ~ U(-init_scale, init_scale)
    shared_init: bool = False  # all workers start from one common draw
    model: ModelSpec = field(default_factory=lambda: ModelSpec("mlp", 20, 5, hidden=16))
    data: DataConfig = field(default_factory=DataConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    schedules: HyperSchedule = field(
        default_factory=lambda: HyperSchedule(s_init=1, s_final=10, rounds_total=200)
    )
    channel: ChannelModel = field(default_factory=ChannelModel)
    censoring: CensorPolicy = field(default_factory=CensorPolicy)
    attacks: AttackSpec = field(default_factory=AttackSpec)
    screening: ScreeningPolicy = field(default_factory=ScreeningPolicy)
    failures: FailureSpec = field(default_factory=FailureSpec)

    def validate(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if self.num_workers < 1:
            raise ConfigError(f"num_workers must be >= 1, got {self.num_workers}")
        if self.batch_size < 0:
            raise ConfigError(f"batch_size must be >= 0, got {self.batch_size}")
        if self.velocity_mode not in ("bi", "total"):
            raise ConfigError(f"velocity_mode must be bi or total, got {self.velocity_mode!r}")
        if self.coeff_mode not in ("scalar", "per_coord"):
            raise ConfigError(f"coeff_mode must be scalar or per_coord, got {self.coeff_mode!r}")
        if not self.init_scale > 0:
            raise ConfigError(f"init_scale must be > 0, got {self.init_scale}")
        self.model.validate()
        self.data.validate()
        self.objective.validate()
        schedule = self.schedules
        if schedule.rounds_total < self.rounds:
            raise ConfigError(
                f"schedules.rounds_total ({schedule.rounds_total}) must cover rounds "
                f"({self.rounds}); omit it to inherit"
            )
        schedule.validate(self.num_workers)
        self.channel.validate()
        self.censoring.validate()
        self.attacks.validate(self.num_workers)
        self.screening.validate()
        self.failures.validate()
        return self


_SECTION_TYPES = {
    "model": ModelSpec,
    "data": DataConfig,
    "objective": ObjectiveConfig,
    "schedules": HyperSchedule,
    "channel": ChannelModel,
    "censoring": CensorPolicy,
    "attacks": AttackSpec,
    "screening": ScreeningPolicy,
    "failures": FailureSpec,
}

# config-file spellings that differ from dataclass field names
_KEY_ALIASES = {
    "model": {"classes": "num_classes"},
}


def _coerce(value, target_type, key):
    if value is None:
        return None
    try:
        if target_type is bool:
            if isinstance(value, bool):
                return value
            raise ValueError("expected a boolean")
        if target_type is int:
            if isinstance(value, bool) or int(value) != float(value):
                raise ValueError("expected an integer")
            return int(value)
        if target_type is float:
            return float(value)
        if target_type is str:
            if not isinstance(value, str):
                raise ValueError("expected a string")
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return value


def _field_types(cls):
    out = {}
    for f in fields(cls):
        t = f.type
        if t in ("int", int):
            out[f.name] = int
        elif t in ("float", float):
            out[f.name] = float
        elif t in ("bool", bool):
            out[f.name] = bool
        elif t in ("str", str):
            out[f.name] = str
        else:
            out[f.name] = None  # optional / union fields handled loosely
    return out


def _build_section(name, cls, mapping, base=None):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{name} must be a mapping")
    aliases = _KEY_ALIASES.get(name, {})
    types = _field_types(cls)
    kwargs = {}
    for key, value in mapping.items():
        field_name = aliases.get(key, key)
        if field_name not in types:
            raise ConfigError(f"unknown config key: {name}.{key}")
        target = types[field_name]
        if target is not None:
            value = _coerce(value, target, f"{name}.{key}")
        elif field_name in ("tolerance",) and value is not None:
            value = _coerce(value, float, f"{name}.{key}")
        elif field_name in ("csv_path", "output_dir") and value is not None:
            value = _coerce(value, str, f"{name}.{key}")
        kwargs[field_name] = value
    if base is not None:
        return replace(base, **kwargs)
    return cls(**kwargs)


def from_dict(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed config mapping (strict keys)."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    raw = copy.deepcopy(raw)
    defaults = ExperimentConfig()
    top_types = _field_types(ExperimentConfig)
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(
                key, _SECTION_TYPES[key], value, base=getattr(defaults, key)
            )
        elif key in top_types:
            target = top_types[key]
            if target is not None:
                value = _coerce(value, target, key)
            elif key == "output_dir" and value is not None:
                value = _coerce(value, str, key)
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key: {key}")
    cfg = replace(defaults, **kwargs)
    # the schedule length follows the run length unless set explicitly
    if "schedules" not in raw or "rounds_total" not in (raw.get("schedules") or {}):
        cfg = replace(cfg, schedules=replace(cfg.schedules, rounds_total=cfg.rounds))
    if "schedules" not in raw or "s_final" not in (raw.get("schedules") or {}):
        s_final = min(defaults.schedules.s_final, cfg.num_workers)
        cfg = replace(
            cfg, schedules=replace(cfg.schedules, s_final=max(s_final, cfg.schedules.s_init))
        )
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw)


def to_dict(cfg: ExperimentConfig) -> dict:
    """Plain mapping form of a config, suitable for the run manifest."""
    out = asdict(cfg)
    out["model"]["classes"] = out["model"].pop("num_classes")
    return out


def apply_overrides(raw: dict, overrides: dict) -> dict:
    """Apply {dotted.key: value} overrides to a raw config mapping."""
    out = copy.deepcopy(raw) if raw else {}
    for dotted, value in overrides.items():
        if dotted.startswith("_"):
            continue
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted}: {part} is not a mapping")
        node[parts[-1]] = value
    return out
