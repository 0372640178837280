import math
import torch
from typing import List
from dataclasses import dataclass

from captiongan.exc import InputError, ConfigError


@dataclass(frozen=True)
class GeneratorConfig:
    """Prompt mapper and decoder settings. ``decoder`` is a Hugging Face
    causal LM identifier, or ``toy`` for the tiny word-level decoder."""

    decoder: str = "gpt2"
    k: int = 10
    d2: int = 768
    mlp_hidden: int = 3840
    max_len: int = 20
    eos_token: str = "."
    sample_n: int = 5
    temperature: float = 1.0
    init_noise: float = 0.0
    layers: int = 2
    heads: int = 4

    def __post_init__(self):
        if self.k < 1 or self.d2 < 1 or self.mlp_hidden < 1:
            raise ConfigError("Prompt mapper sizes must be positive")
        if self.max_len < 1:
            raise ConfigError("Maximum caption length must be at least 1")
        if self.sample_n < 1:
            raise ConfigError("At least one sample per image is required")
        if self.temperature <= 0:
            raise ConfigError("Sampling temperature must be positive")
        if self.init_noise < 0:
            raise ConfigError("Initialization noise must be nonnegative")

    @property
    def decode(self):
        return DecodeConfig(
            max_len=self.max_len,
            eos_token=self.eos_token,
            temperature=self.temperature,
        )


@dataclass(frozen=True)
class DecodeConfig:
    max_len: int = 20
    eos_token: str = "."
    beam_size: int = 1
    temperature: float = 1.0

    def __post_init__(self):
        if self.max_len < 1:
            raise ConfigError("Maximum caption length must be at least 1")
        if self.beam_size != 1:
            raise ConfigError("Only beam size 1 is supported")
        if self.temperature <= 0:
            raise ConfigError("Sampling temperature must be positive")


class VisualPromptSet(object):
    """The k x d2 prefix vectors conditioning the decoder for one image."""

    def __init__(self, matrix, image_id=None):
        if matrix.ndim != 2:
            raise InputError("Visual prompts must be a k x d2 matrix")
        if not bool(torch.all(torch.isfinite(matrix))):
            raise InputError("Visual prompts have non-finite entries")
        self.matrix = matrix
        self.image_id = image_id

    @property
    def k(self):
        return int(self.matrix.shape[0])

    @property
    def d2(self):
        return int(self.matrix.shape[1])


@dataclass
class CaptionSample:
    """A decoded caption with the log-probability of every generated token
    under the distribution it was drawn from. The EOS token, when reached,
    is the last token and is included."""

    token_ids: List[int]
    text: str
    log_probs: List[float]
    terminated: bool

    def __post_init__(self):
        if len(self.token_ids) != len(self.log_probs):
            raise InputError("Token ids and log-probs must have equal length")
        for lp in self.log_probs:
            if lp > 0 or math.isnan(lp):
                raise InputError("Step log-probabilities must be <= 0", value=lp)

    @property
    def log_prob(self):
        return math.fsum(self.log_probs)

    def to_dict(self):
        return {
            "token_ids": self.token_ids,
            "text": self.text,
            "log_probs": self.log_probs,
            "terminated": self.terminated,
        }
