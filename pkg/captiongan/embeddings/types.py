import numpy as np
from typing import Any, Optional
from dataclasses import dataclass

from captiongan.exc import InputError, ConfigError

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbeddingConfig:
    """Encoder selection. ``backend`` is ``toy`` or ``pretrained:<model-id>``;
    the remaining toy values only apply to the synthetic backend."""

    backend: str = "pretrained:openai/clip-vit-large-patch14"
    d1: int = 64
    vocab_size: int = 50
    projection_seed: int = 7
    noise_scale: float = 0.1
    workers: int = 1
    batch_size: int = 64

    def __post_init__(self):
        if self.backend != "toy" and not self.backend.startswith("pretrained:"):
            raise ConfigError(f"Unknown embedding backend: {self.backend}")
        if self.workers < 1 or self.batch_size < 1:
            raise ConfigError("Encoder workers and batch size must be positive")

    @property
    def toy_spec(self):
        return ToyWorldSpec(
            vocab_size=self.vocab_size,
            d1=self.d1,
            projection_seed=self.projection_seed,
            noise_scale=self.noise_scale,
        )


@dataclass(frozen=True)
class ToyWorldSpec:
    vocab_size: int = 50
    d1: int = 64
    projection_seed: int = 7
    noise_scale: float = 0.1

    def __post_init__(self):
        if self.vocab_size < 2:
            raise ConfigError("Toy vocabulary needs at least two tokens")
        if self.d1 < 4:
            raise ConfigError("Toy embedding dimension must be at least 4")
        if self.noise_scale < 0:
            raise ConfigError("Toy image noise scale must be nonnegative")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A vector in the shared contrastive space. ``fingerprint`` names the
    encoder that produced it, when known."""

    values: np.ndarray
    normalized: bool = True
    fingerprint: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1:
            raise InputError("Embedding must be a vector", shape=list(values.shape))
        if not np.all(np.isfinite(values)):
            raise InputError("Embedding has non-finite entries")
        if self.normalized:
            norm = float(np.linalg.norm(values.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise InputError("Embedding is not unit-norm", norm=norm)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, values, fingerprint=None):
        """L2-normalise a raw encoder output."""
        values = np.asarray(values, dtype=np.float64)
        norm = np.linalg.norm(values)
        if norm == 0 or not np.isfinite(norm):
            raise InputError("Cannot normalise a zero or non-finite embedding")
        return cls(values / norm, normalized=True, fingerprint=fingerprint)

    @property
    def dim(self):
        return int(self.values.shape[0])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return (
            self.normalized == other.normalized
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )

    def __hash__(self):
        return hash(self.values.tobytes())


@dataclass(frozen=True)
class ImageRecord:
    """An image of the training or evaluation set. For the pretrained
    backend ``payload`` is a file path or URL; for the toy backend it is a
    mapping with the hidden ``caption`` and a ``seed`` for the noise."""

    id: str
    payload: Any

    def to_dict(self):
        return {"id": self.id, "payload": self.payload}


@dataclass(frozen=True)
class SentenceRecord:
    id: str
    text: str

    def __post_init__(self):
        if self.text is None or not len(self.text.strip()):
            raise InputError("Sentence text is empty", sentence_id=self.id)

    def to_dict(self):
        return {"id": self.id, "text": self.text}
