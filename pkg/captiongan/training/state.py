import io
import copy
import torch
import pickle
import zipfile
import structlog
import numpy as np
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple
from dataclasses import dataclass, field

from captiongan.exc import ConfigError, FormatError, StateError
from captiongan.core.export import atomic_write

log = structlog.get_logger(__name__)

CHECKPOINT_VERSION = 1
MODES = ("adversarial", "pseudo")


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings for both training stages. The number of
    samples per image lives on the generator config (``sample_n``)."""

    gen_lr: float = 1e-5
    gen_warmup: int = 150
    disc_lr: float = 1e-5
    disc_warmup: int = 0
    init_lr: float = 2e-5
    init_warmup: int = 5000
    batch_size: int = 128
    init_batch_size: int = 32
    weight_decay: float = 0.05
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    steps: int = 1000
    init_steps: int = 2000
    grad_clip: float = 1.0
    d_steps_per_g: int = 1
    d_pretrain_steps: int = 0
    skip_init: bool = False
    mode: str = "adversarial"
    log_every: int = 50
    workers: int = 1

    def __post_init__(self):
        for name in ("gen_lr", "disc_lr", "init_lr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"Learning rate must be positive: {name}")
        if self.batch_size < 1 or self.init_batch_size < 1:
            raise ConfigError("Batch sizes must be positive")
        if self.steps < 0 or self.init_steps < 0:
            raise ConfigError("Step counts must be nonnegative")
        if self.d_steps_per_g < 1 or self.d_pretrain_steps < 0:
            raise ConfigError("Invalid discriminator schedule")
        if self.mode not in MODES:
            raise ConfigError(f"Unknown training mode: {self.mode}")
        if self.grad_clip < 0 or self.weight_decay < 0:
            raise ConfigError("Clip norm and weight decay must be nonnegative")


@dataclass
class TrainState:
    """Counters, random generator states and running statistics of a
    training run. ``rng`` holds the serialised state of every random
    stream by name."""

    step: int = 0
    init_step: int = 0
    rng: Dict[str, Any] = field(default_factory=dict)
    stats: Dict[str, float] = field(default_factory=dict)

    def advance(self, count=1):
        if count < 0:
            raise StateError("Training step cannot decrease")
        self.step += count

    def to_dict(self):
        return {
            "step": self.step,
            "init_step": self.init_step,
            "rng": self.rng,
            "stats": self.stats,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            step=int(data.get("step", 0)),
            init_step=int(data.get("init_step", 0)),
            rng=dict(data.get("rng", {})),
            stats=dict(data.get("stats", {})),
        )


def capture_rng(numpy_rngs=None, torch_generators=None):
    """Snapshot the named numpy and torch random streams plus the global
    torch generator."""
    state = {"torch_global": torch.get_rng_state()}
    for name, rng in (numpy_rngs or {}).items():
        state[f"numpy:{name}"] = rng.bit_generator.state
    for name, gen in (torch_generators or {}).items():
        state[f"torch:{name}"] = gen.get_state()
    return state


def restore_rng(state, numpy_rngs=None, torch_generators=None):
    if "torch_global" in state:
        torch.set_rng_state(state["torch_global"])
    for name, rng in (numpy_rngs or {}).items():
        key = f"numpy:{name}"
        if key not in state:
            raise StateError("Checkpoint lacks a random stream", stream=name)
        rng.bit_generator.state = state[key]
    for name, gen in (torch_generators or {}).items():
        key = f"torch:{name}"
        if key not in state:
            raise StateError("Checkpoint lacks a random stream", stream=name)
        gen.set_state(state[key])


@dataclass(eq=False)
class CheckpointBundle:
    """Everything needed to resume or evaluate a run: model weights,
    optimizer and schedule states, the training state and the resolved
    run config."""

    tag: str
    generator: Dict[str, Any]
    state: TrainState
    config: Dict[str, Any]
    discriminator: Optional[Dict[str, Any]] = None
    optimizers: Dict[str, Any] = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def to_dict(self):
        return {
            "version": self.version,
            "tag": self.tag,
            "generator": self.generator,
            "discriminator": self.discriminator,
            "optimizers": self.optimizers,
            "state": self.state.to_dict(),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            tag=data["tag"],
            generator=data["generator"],
            discriminator=data.get("discriminator"),
            optimizers=data.get("optimizers") or {},
            state=TrainState.from_dict(data["state"]),
            config=data["config"],
            version=data["version"],
        )


def plain_state(value):
    """Rebuild nested state as plain containers with sorted keys. Module
    and optimizer state dicts carry extra attributes (``_metadata``) that
    would otherwise be pickled, so a reloaded bundle re-saves to the same
    bytes."""
    if isinstance(value, Mapping):
        keys = sorted(value.keys(), key=lambda k: (type(k).__name__, k))
        return {k: plain_state(value[k]) for k in keys}
    if isinstance(value, list):
        return [plain_state(v) for v in value]
    if isinstance(value, tuple):
        return tuple(plain_state(v) for v in value)
    return value


def save_checkpoint(bundle, path):
    """Write a bundle atomically; the file either appears complete or not
    at all."""
    data = plain_state(bundle.to_dict())
    atomic_write(Path(path), lambda fh: torch.save(data, fh))
    log.info(
        "Saved checkpoint", path=Path(path), tag=bundle.tag, step=bundle.state.step
    )
    return path


def load_checkpoint(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
        data = torch.load(io.BytesIO(raw), map_location="cpu", weights_only=True)
    except OSError as exc:
        raise FormatError("Cannot read checkpoint", path=path.as_posix()) from exc
    except (RuntimeError, EOFError, ValueError, pickle.UnpicklingError) as exc:
        raise FormatError("Corrupt checkpoint", path=path.as_posix()) from exc
    except zipfile.BadZipFile as exc:
        raise FormatError("Corrupt checkpoint", path=path.as_posix()) from exc
    if not isinstance(data, dict) or "version" not in data:
        raise FormatError("Not a checkpoint", path=path.as_posix())
    if data["version"] != CHECKPOINT_VERSION:
        raise StateError(
            "Unsupported checkpoint version",
            expected=CHECKPOINT_VERSION,
            found=data["version"],
        )
    try:
        return CheckpointBundle.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise FormatError("Checkpoint is missing fields", path=path.as_posix()) from exc


def numpy_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def torch_rng(seed):
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def clone_state(state):
    """Detached deep copy of a state dict, so a bundle does not change when
    training continues."""
    return copy.deepcopy(state)
