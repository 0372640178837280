import math
import structlog
import numpy as np
from typing import Optional, Tuple
from dataclasses import dataclass

from captiongan.exc import InputError, StateError, ConfigError
from captiongan.embeddings.types import EmbeddingVector

log = structlog.get_logger(__name__)

STRATEGIES = ("cos", "agg", "mix")
RAMP_MODES = ("additive", "convex")
L1_REDUCTIONS = ("mean", "sum")
TOTAL_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RewardConfig:
    """Semantic reward selection and the schedule by which it is blended
    with the discriminator's naturalness score.

    ``use_naturalness`` and ``use_semantic`` switch the two reward sources
    off entirely. Without the naturalness score the semantic reward is used
    at full weight from the first step, since there is nothing to ramp
    towards."""

    strategy: str = "agg"
    temperature: float = 0.05
    use_cos_term: bool = True
    use_l1_term: bool = True
    l1_reduction: str = "mean"
    warmup_d_only_steps: int = 150
    ramp_steps: int = 2350
    mix_weights: Tuple[float, float] = (0.5, 0.5)
    ramp_mode: str = "additive"
    naturalness_clamp: Optional[float] = None
    use_naturalness: bool = True
    use_semantic: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"Unknown reward strategy: {self.strategy}")
        if not self.temperature > 0:
            raise ConfigError("Aggregation temperature must be positive")
        if self.strategy in ("agg", "mix"):
            if not (self.use_cos_term or self.use_l1_term):
                raise ConfigError("The aggregate reward needs at least one term")
        if self.l1_reduction not in L1_REDUCTIONS:
            raise ConfigError(f"Unknown L1 reduction: {self.l1_reduction}")
        if self.ramp_mode not in RAMP_MODES:
            raise ConfigError(f"Unknown ramp mode: {self.ramp_mode}")
        if self.warmup_d_only_steps < 0 or self.ramp_steps < 0:
            raise ConfigError("Reward schedule steps must be nonnegative")
        if len(self.mix_weights) != 2:
            raise ConfigError("Reward mix needs exactly two weights")
        if self.naturalness_clamp is not None and self.naturalness_clamp <= 0:
            raise ConfigError("Naturalness clamp must be positive")
        if not (self.use_naturalness or self.use_semantic):
            raise ConfigError("At least one reward source must be enabled")

    @property
    def needs_aggregate(self):
        return self.use_semantic and self.strategy in ("agg", "mix")


class AggregateEmbedding(object):
    """Temperature-softmax weighted sum of corpus sentence embeddings for
    one image. Not renormalised, so generally not unit-norm."""

    def __init__(self, values, image_id=None, temperature=None, fingerprint=None):
        values = np.array(values, dtype=np.float32)
        if values.ndim != 1:
            raise InputError("Aggregate must be a vector")
        if not np.all(np.isfinite(values)):
            raise InputError("Aggregate has non-finite entries", image_id=image_id)
        values.setflags(write=False)
        self.values = values
        self.image_id = image_id
        self.temperature = temperature
        self.fingerprint = fingerprint

    @property
    def dim(self):
        return int(self.values.shape[0])

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "temperature": self.temperature,
            "fingerprint": self.fingerprint,
        }

    def __repr__(self):
        return f"<AggregateEmbedding({self.image_id!r}, tau={self.temperature})>"


@dataclass(frozen=True)
class RewardBreakdown:
    """Reward of one caption. ``ramp`` is the schedule weight at the step
    the reward was computed; ``total`` blends the two sources according
    to the ramp mode."""

    naturalness: float
    semantic: float
    ramp: float
    total: float
    mode: str = "additive"

    def __post_init__(self):
        if not 0.0 <= self.ramp <= 1.0:
            raise InputError("Ramp weight must lie in [0, 1]", ramp=self.ramp)
        expected = blend(self.naturalness, self.semantic, self.ramp, self.mode)
        if abs(expected - self.total) > TOTAL_TOLERANCE:
            raise InputError("Reward total does not match its parts", total=self.total)

    def to_dict(self):
        return {
            "naturalness": self.naturalness,
            "semantic": self.semantic,
            "lambda": self.ramp,
            "total": self.total,
        }


def _values(vector):
    if isinstance(vector, (EmbeddingVector, AggregateEmbedding)):
        vector = vector.values
    return np.asarray(vector, dtype=np.float64)


def _check_dims(a, b):
    if a.shape != b.shape:
        raise InputError(
            "Embedding dimensions differ",
            left=list(a.shape),
            right=list(b.shape),
        )


def reward_cos(image_embedding, caption_embedding):
    """Cosine of two unit-norm embeddings."""
    a = _values(image_embedding)
    b = _values(caption_embedding)
    _check_dims(a, b)
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def softmax_weights(scores, temperature):
    """Softmax of ``scores / temperature`` with max-subtraction."""
    if not temperature > 0:
        raise InputError("Temperature must be positive", temperature=temperature)
    scaled = np.asarray(scores, dtype=np.float64) / temperature
    scaled = scaled - scaled.max()
    weights = np.exp(scaled)
    return weights / weights.sum()


def aggregate(image_embedding, table, temperature, image_id=None):
    """Attention-weighted summation of the corpus table rows, weighted by
    the softmax of their cosine to the image over the temperature."""
    fp = getattr(image_embedding, "fingerprint", None)
    if fp is not None and fp != table.fingerprint:
        raise StateError(
            "Image embedding and corpus table come from different encoders",
            expected=table.fingerprint,
            found=fp,
        )
    weights = softmax_weights(table.similarities(image_embedding), temperature)
    values = weights @ table.matrix.astype(np.float64)
    return AggregateEmbedding(
        values,
        image_id=image_id,
        temperature=float(temperature),
        fingerprint=table.fingerprint,
    )


def l1_distance(a, b, reduction="mean"):
    diff = np.abs(a - b)
    if reduction == "sum":
        return float(diff.sum())
    return float(diff.mean())


def reward_agg(caption_embedding, aggregate_embedding, cfg):
    """Cosine to the aggregate minus the L1 distance from it; either term
    can be switched off."""
    c = _values(caption_embedding)
    a = _values(aggregate_embedding)
    _check_dims(c, a)
    reward = 0.0
    if cfg.use_cos_term:
        norm = np.linalg.norm(c) * np.linalg.norm(a)
        if norm > 0:
            reward += float(np.clip(np.dot(c, a) / norm, -1.0, 1.0))
    if cfg.use_l1_term:
        reward -= l1_distance(c, a, cfg.l1_reduction)
    return reward


def reward_mix(r_cos, r_agg, weights=(0.5, 0.5)):
    return weights[0] * r_cos + weights[1] * r_agg


def semantic_reward(image_embedding, caption_embedding, aggregate_embedding, cfg):
    """The semantic reward selected by ``cfg.strategy``."""
    if cfg.strategy == "cos":
        return reward_cos(image_embedding, caption_embedding)
    if aggregate_embedding is None:
        raise StateError("The aggregate reward needs a precomputed aggregate")
    r_agg = reward_agg(caption_embedding, aggregate_embedding, cfg)
    if cfg.strategy == "agg":
        return r_agg
    r_cos = reward_cos(image_embedding, caption_embedding)
    return reward_mix(r_cos, r_agg, cfg.mix_weights)


def ramp_weight(step, cfg):
    """Weight of the semantic reward at a training step: zero during the
    naturalness-only warmup, then linear up to 1."""
    if step < 0:
        raise InputError("Training step must be nonnegative", step=step)
    if not cfg.use_naturalness:
        return 1.0
    if step < cfg.warmup_d_only_steps:
        return 0.0
    if cfg.ramp_steps == 0:
        return 1.0
    return min(1.0, (step - cfg.warmup_d_only_steps) / cfg.ramp_steps)


def blend(naturalness, semantic, ramp, mode="additive"):
    if mode == "convex":
        return (1.0 - ramp / 2.0) * naturalness + (ramp / 2.0) * semantic
    return naturalness + ramp * semantic


def combined_reward(f_d, r_semantic, step, cfg):
    """Blend the raw naturalness score and the semantic reward at ``step``."""
    naturalness = float(f_d) if cfg.use_naturalness else 0.0
    if cfg.naturalness_clamp is not None:
        bound = cfg.naturalness_clamp
        naturalness = min(bound, max(-bound, naturalness))
    semantic = float(r_semantic) if cfg.use_semantic else 0.0
    if not (math.isfinite(naturalness) and math.isfinite(semantic)):
        raise InputError("Reward inputs must be finite", f_d=f_d, semantic=r_semantic)
    ramp = ramp_weight(step, cfg)
    total = blend(naturalness, semantic, ramp, cfg.ramp_mode)
    return RewardBreakdown(naturalness, semantic, ramp, total, mode=cfg.ramp_mode)


class RewardScorer(object):
    """Scores generated captions for a batch of images: re-encodes the
    caption text with the reward backend, looks up the precomputed
    aggregates and asks the discriminator for naturalness."""

    def __init__(self, backend, cfg, aggregates=None, workers=1):
        self.backend = backend
        self.cfg = cfg
        self.aggregates = dict(aggregates or {})
        self.workers = workers
        if cfg.needs_aggregate and not len(self.aggregates):
            raise StateError("Aggregate reward strategy without aggregates")

    def semantic(self, images, texts):
        """Semantic reward of ``texts[i]`` for ``images[i]``, where images
        are (ImageRecord id, EmbeddingVector) pairs."""
        if not self.cfg.use_semantic:
            return [0.0 for _ in texts]
        captions = self.backend.encode_texts(texts, workers=self.workers)
        rewards = []
        for (image_id, vector), caption in zip(images, captions):
            agg = None
            if self.cfg.needs_aggregate:
                agg = self.aggregates.get(image_id)
                if agg is None:
                    raise StateError("No aggregate for image", image_id=image_id)
            rewards.append(semantic_reward(vector, caption, agg, self.cfg))
        return rewards

    def score(self, images, texts, naturalness, step):
        """Combined rewards for caption ``texts`` given their naturalness
        scores, as a list of RewardBreakdown."""
        semantic = self.semantic(images, texts)
        return [
            combined_reward(f, r, step, self.cfg)
            for f, r in zip(naturalness, semantic)
        ]
