import torch
import structlog
from torch import nn
from dataclasses import dataclass

from captiongan import settings
from captiongan.exc import InputError, ConfigError
from captiongan.generator.decoder import WordTokenizer

log = structlog.get_logger(__name__)

# Probabilities are clamped to [EPS, 1 - EPS] before taking logs.
EPS = 1e-12


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Naturalness discriminator. ``encoder`` is a Hugging Face encoder id,
    or ``toy`` for the seeded tiny bidirectional encoder, whose width,
    depth and head count are ``hidden``, ``layers`` and ``heads``."""

    encoder: str = "roberta-base"
    head_hidden: int = 384
    freeze_encoder: bool = False
    hidden: int = 64
    layers: int = 1
    heads: int = 4
    max_tokens: int = 64

    def __post_init__(self):
        if self.head_hidden < 1 or self.hidden < 1 or self.max_tokens < 2:
            raise ConfigError("Discriminator sizes must be positive")


class ToySentenceEncoder(nn.Module):
    """Bidirectional transformer over the toy vocabulary, mean-pooled and
    passed through a tanh pooler."""

    def __init__(self, tokenizer, hidden=64, layers=1, heads=4, max_tokens=64):
        super().__init__()
        self.tokenizer = tokenizer
        self.max_tokens = max_tokens
        self.pooled_dim = hidden
        self.embed = nn.Embedding(len(tokenizer) + 1, hidden)
        self.pad_id = len(tokenizer)
        self.positions = nn.Embedding(max_tokens, hidden)
        layer = nn.TransformerEncoderLayer(
            hidden,
            heads,
            dim_feedforward=2 * hidden,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.pooler = nn.Linear(hidden, hidden)

    def forward(self, texts):
        ids = [self.tokenizer.encode(t)[: self.max_tokens] for t in texts]
        width = max(len(i) for i in ids)
        device = self.embed.weight.device
        batch = torch.full((len(ids), width), self.pad_id, dtype=torch.long)
        for row, seq in enumerate(ids):
            batch[row, : len(seq)] = torch.as_tensor(seq, dtype=torch.long)
        batch = batch.to(device)
        padding = batch == self.pad_id
        positions = torch.arange(width, device=device)
        hidden = self.embed(batch) + self.positions(positions)[None, :, :]
        hidden = self.blocks(hidden, src_key_padding_mask=padding)
        keep = (~padding).to(hidden.dtype)[:, :, None]
        pooled = (hidden * keep).sum(dim=1) / keep.sum(dim=1)
        return torch.tanh(self.pooler(pooled))


class PretrainedSentenceEncoder(nn.Module):
    """Hugging Face encoder (RoBERTa by default) returning its pooled
    sentence representation."""

    def __init__(self, model_id, max_tokens=64):
        super().__init__()
        from transformers import AutoModel, AutoTokenizer

        log.info("Loading sentence encoder", model=model_id)
        self.model_id = model_id
        self.max_tokens = max_tokens
        self.model = AutoModel.from_pretrained(model_id, add_pooling_layer=True)
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.pooled_dim = self.model.config.hidden_size

    def forward(self, texts):
        device = next(self.model.parameters()).device
        inputs = self.tokenizer(
            list(texts),
            return_tensors="pt",
            padding=True,
            truncation=True,
            max_length=self.max_tokens,
        ).to(device)
        return self.model(**inputs).pooler_output


class Discriminator(nn.Module):
    """Sentence encoder followed by a two-layer tanh head that outputs an
    unbounded naturalness score per sentence. Texts, not token ids, are the
    input: generated captions are re-tokenized by the encoder's tokenizer."""

    def __init__(self, encoder, head_hidden=384, freeze_encoder=False):
        super().__init__()
        self.encoder = encoder
        self.hidden = nn.Linear(encoder.pooled_dim, head_hidden)
        self.output = nn.Linear(head_hidden, 1)
        # scores start near zero for every sentence
        nn.init.normal_(self.output.weight, mean=0.0, std=0.01)
        nn.init.zeros_(self.output.bias)
        self.freeze_encoder = freeze_encoder
        if freeze_encoder:
            for param in self.encoder.parameters():
                param.requires_grad_(False)

    def head(self, pooled):
        return self.output(torch.tanh(self.hidden(pooled))).squeeze(-1)

    def forward(self, texts):
        texts = list(texts)
        if not len(texts):
            raise InputError("No sentences to score")
        for text in texts:
            if text is None or not len(text.strip()):
                raise InputError("Cannot score an empty sentence")
        return self.head(self.encoder(texts))

    @torch.no_grad()
    def naturalness(self, text):
        return float(self([text])[0])


def discriminator_loss(real_scores, fake_scores):
    """Binary cross-entropy of the naturalness scores: the mean of
    -log(sigmoid(real)) plus the mean of -log(1 - sigmoid(fake)).
    Accepts tensors (differentiable) or plain sequences of floats."""
    if not torch.is_tensor(real_scores):
        real_scores = torch.as_tensor(list(real_scores), dtype=torch.float64)
    if not torch.is_tensor(fake_scores):
        fake_scores = torch.as_tensor(list(fake_scores), dtype=torch.float64)
    if real_scores.numel() == 0 or fake_scores.numel() == 0:
        raise InputError("Discriminator loss needs real and fake scores")
    p_real = torch.sigmoid(real_scores.double()).clamp(EPS, 1 - EPS)
    p_fake = torch.sigmoid(fake_scores.double()).clamp(EPS, 1 - EPS)
    real_term = -torch.log(p_real).mean()
    fake_term = -torch.log(1 - p_fake).mean()
    return real_term + fake_term


def build_discriminator(config, seed=0, vocabulary=None):
    torch.manual_seed(seed)
    if config.encoder == "toy":
        if vocabulary is None:
            raise ConfigError("The toy sentence encoder needs a vocabulary")
        encoder = ToySentenceEncoder(
            WordTokenizer(vocabulary),
            hidden=config.hidden,
            layers=config.layers,
            heads=config.heads,
            max_tokens=config.max_tokens,
        )
    else:
        encoder = PretrainedSentenceEncoder(
            config.encoder, max_tokens=config.max_tokens
        )
    discriminator = Discriminator(
        encoder,
        head_hidden=config.head_hidden,
        freeze_encoder=config.freeze_encoder,
    )
    return discriminator.to(settings.DEVICE)
