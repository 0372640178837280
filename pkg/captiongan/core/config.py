import yaml
from pathlib import Path
from banal import is_mapping
from dataclasses import dataclass, field, fields, asdict, replace
from typing import Optional, Union, get_args, get_origin, get_type_hints

from captiongan import settings
from captiongan.exc import ConfigError
from captiongan.util import load_yaml, fingerprint
from captiongan.embeddings.types import EmbeddingConfig
from captiongan.generator.types import GeneratorConfig
from captiongan.discriminator import DiscriminatorConfig
from captiongan.rewards.semantic import RewardConfig
from captiongan.training.state import TrainConfig
from captiongan.evaluation.report import EvalConfig


@dataclass(frozen=True)
class DataConfig:
    """Input files of a run. Paths are resolved relative to the config file
    they are read from. The ``world_*`` values describe the synthetic world
    written by ``captiongan toy-world``."""

    images: Optional[str] = None
    corpus: Optional[str] = None
    refs: Optional[str] = None
    eval_images: Optional[str] = None
    pseudo_labels: Optional[str] = None
    world_images: int = 500
    world_sentences: int = 500
    world_seed: int = 11

    def __post_init__(self):
        if self.world_images < 1 or self.world_sentences < 1:
            raise ConfigError("Toy world sizes must be positive")


SECTIONS = {
    "embeddings": EmbeddingConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "rewards": RewardConfig,
    "training": TrainConfig,
    "data": DataConfig,
    "evaluation": EvalConfig,
}


def _field_kind(hint):
    """The scalar type a config field holds: ``Optional[X]`` is ``X``."""
    if get_origin(hint) is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        if len(args) == 1:
            hint = args[0]
    if get_origin(hint) is tuple:
        return tuple
    return hint


def _coerce(hint, value, key):
    """Turn a file or ``-s`` value into the field's type. Only non-string
    fields are YAML-parsed, so ``data.corpus=2024`` stays a path."""
    if value is None:
        return None
    kind = _field_kind(hint)
    try:
        if kind is bool:
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, bool):
                raise ValueError(value)
            return value
        if kind is int:
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if isinstance(value, bool):
                raise ValueError(value)
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if kind is tuple:
            if isinstance(value, str):
                value = yaml.safe_load(value)
            return tuple(float(v) for v in value)
        if kind is str:
            return str(value)
    except (TypeError, ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"Invalid value for {key}: {value!r}", key=key) from exc
    if isinstance(value, str):
        return yaml.safe_load(value)
    return value


def _build_section(name, cls, data):
    if not is_mapping(data):
        raise ConfigError(f"Config section must be a mapping: {name}", key=name)
    hints = get_type_hints(cls)
    values = {}
    for key, value in data.items():
        if key not in hints:
            raise ConfigError(f"Unknown config key: {name}.{key}", key=f"{name}.{key}")
        values[key] = _coerce(hints[key], value, f"{name}.{key}")
    return cls(**values)


@dataclass(frozen=True)
class RunConfig:
    """The fully resolved configuration of a run: defaults, overridden by a
    YAML file, overridden by ``section.key=value`` assignments."""

    name: str = "run"
    seed: int = 42
    embeddings: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data, base_path=None):
        data = dict(data or {})
        kwargs = {}
        for key in ("name", "seed"):
            if key in data:
                kwargs[key] = data.pop(key)
        if "seed" in kwargs:
            kwargs["seed"] = _coerce(int, kwargs["seed"], "seed")
        if "name" in kwargs:
            kwargs["name"] = str(kwargs["name"])
        for name, section in data.items():
            if name not in SECTIONS:
                raise ConfigError(f"Unknown config section: {name}", key=name)
            kwargs[name] = _build_section(name, SECTIONS[name], section or {})
        config = cls(**kwargs)
        if base_path is not None:
            config = config.resolve_paths(base_path)
        return config

    @classmethod
    def load(cls, file_path=None, overrides=()):
        """Load a config file (or the defaults) and apply overrides."""
        data = {}
        base_path = None
        if file_path is not None:
            file_path = Path(file_path)
            if not file_path.exists():
                named = settings.METADATA_PATH.joinpath(f"{file_path}.yml")
                if named.exists():
                    file_path = named
            data = load_yaml(file_path) or {}
            base_path = file_path.resolve().parent
        data = merge(data, parse_overrides(overrides))
        return cls.from_dict(data, base_path=base_path)

    def resolve_paths(self, base_path):
        paths = {}
        for f in fields(DataConfig):
            value = getattr(self.data, f.name)
            if isinstance(value, str) and f.type == Optional[str]:
                path = Path(value)
                if not path.is_absolute():
                    path = Path(base_path).joinpath(path)
                paths[f.name] = path.as_posix()
        return replace(self, data=replace(self.data, **paths))

    def override(self, overrides):
        """Return a new config with ``section.key=value`` or nested mapping
        overrides applied."""
        if not is_mapping(overrides):
            overrides = parse_overrides(overrides)
        return RunConfig.from_dict(merge(self.to_dict(), overrides))

    def to_dict(self):
        data = asdict(self)
        for section in SECTIONS:
            for key, value in data[section].items():
                if isinstance(value, tuple):
                    data[section][key] = list(value)
        return data

    @property
    def fingerprint(self):
        return fingerprint(self.to_dict())


def parse_overrides(overrides):
    """Turn ``a.b=c`` strings into a nested mapping."""
    data = {}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"Override must be key=value: {item}", key=item)
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value.strip()
    return data


def merge(base, update):
    out = dict(base)
    for key, value in update.items():
        if is_mapping(value) and is_mapping(out.get(key)):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out
