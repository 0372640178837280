import torch
import numpy as np
import structlog
from torch import nn

from captiongan import settings
from captiongan.exc import InputError, ConfigError
from captiongan.embeddings.types import EmbeddingVector
from captiongan.embeddings.backend import sentence_text
from captiongan.generator.types import VisualPromptSet, CaptionSample
from captiongan.generator.decoder import TinyDecoder, PretrainedDecoder, WordTokenizer

log = structlog.get_logger(__name__)


class PromptMapper(nn.Module):
    """Two affine layers with a tanh between them, mapping an image
    embedding to k prompt vectors of the decoder's embedding width."""

    def __init__(self, d1, hidden, k, d2):
        super().__init__()
        self.d1 = d1
        self.k = k
        self.d2 = d2
        self.hidden = nn.Linear(d1, hidden)
        self.output = nn.Linear(hidden, k * d2)

    def forward(self, embeddings):
        if embeddings.shape[-1] != self.d1:
            raise InputError(
                "Embedding dimension does not match the prompt mapper",
                expected=self.d1,
                found=int(embeddings.shape[-1]),
            )
        flat = self.output(torch.tanh(self.hidden(embeddings)))
        return flat.view(-1, self.k, self.d2)


class CaptionGenerator(nn.Module):
    """Visual-prompt captioner: a prompt mapper in front of a causal
    decoder. Decoding runs without gradients; gradients for policy
    training come from re-scoring the generated tokens."""

    def __init__(self, mapper, decoder, config):
        super().__init__()
        if mapper.d2 != decoder.embed_dim:
            raise ConfigError(
                "Prompt width must equal the decoder embedding width",
                d2=mapper.d2,
                decoder=decoder.embed_dim,
            )
        self.mapper = mapper
        self.decoder = decoder
        self.config = config
        self.tokenizer = decoder.tokenizer
        self.eos_token_id = self.tokenizer.token_id(config.eos_token)

    @property
    def device(self):
        return next(self.parameters()).device

    def _as_tensor(self, embeddings):
        if isinstance(embeddings, EmbeddingVector):
            embeddings = [embeddings]
        if isinstance(embeddings, (list, tuple)):
            embeddings = np.stack([e.values for e in embeddings])
        dtype = next(self.parameters()).dtype
        array = np.asarray(embeddings)
        tensor = torch.as_tensor(array, dtype=dtype, device=self.device)
        if tensor.ndim == 1:
            tensor = tensor[None, :]
        return tensor

    def prompts(self, embeddings):
        """Batched prompt mapping: (B, d1) embeddings to (B, k, d2)."""
        return self.mapper(self._as_tensor(embeddings))

    def map_prompts(self, embedding, image_id=None):
        with torch.no_grad():
            matrix = self.prompts(embedding)[0]
        return VisualPromptSet(matrix, image_id=image_id)

    def encode_caption(self, text, max_len):
        """Token ids of a training sentence: EOS appended when missing, then
        truncated to the maximum caption length."""
        ids = self.tokenizer.encode(sentence_text(text))
        if not len(ids):
            raise InputError("Sentence has no tokens", text=text)
        if ids[-1] != self.eos_token_id:
            ids.append(self.eos_token_id)
        return ids[:max_len]

    @torch.no_grad()
    def decode_batch(self, prompts, cfg, sample=False, generator=None):
        """Decode one caption per prompt set, greedily or by ancestral
        sampling. Argmax ties go to the lowest token id."""
        batch = prompts.shape[0]
        eos = self.eos_token_id
        finished = torch.zeros(batch, dtype=torch.bool, device=prompts.device)
        lengths = torch.full((batch,), cfg.max_len, dtype=torch.long)
        steps, step_log_probs = [], []
        embeds = prompts
        for t in range(cfg.max_len):
            logits = self.decoder(embeds)[:, -1, :]
            log_probs = torch.log_softmax(logits / cfg.temperature, dim=-1)
            if sample:
                probs = log_probs.exp()
                tokens = torch.multinomial(probs, 1, generator=generator).squeeze(1)
            else:
                tokens = torch.argmax(logits, dim=-1)
            chosen = log_probs.gather(1, tokens[:, None]).squeeze(1)
            steps.append(tokens)
            step_log_probs.append(chosen)
            ended = (~finished) & (tokens == eos)
            lengths[ended.cpu()] = t + 1
            finished = finished | ended
            if bool(finished.all()):
                break
            step_embeds = self.decoder.embed_tokens(tokens[:, None])
            embeds = torch.cat([embeds, step_embeds], dim=1)
        tokens = torch.stack(steps, dim=1).cpu()
        log_probs = torch.stack(step_log_probs, dim=1).cpu()
        finished = finished.cpu()
        samples = []
        for i in range(batch):
            length = int(min(lengths[i], tokens.shape[1]))
            ids = [int(x) for x in tokens[i, :length]]
            lps = [min(0.0, float(x)) for x in log_probs[i, :length]]
            text = self.tokenizer.decode(ids)
            samples.append(CaptionSample(ids, text, lps, bool(finished[i])))
        return samples

    def greedy_decode(self, prompts, cfg):
        matrix = prompts.matrix if isinstance(prompts, VisualPromptSet) else prompts
        return self.decode_batch(matrix[None], cfg, sample=False)[0]

    def sample_decode(self, prompts, cfg, n, generator=None):
        if n < 1:
            raise InputError("Number of samples must be at least 1", n=n)
        matrix = prompts.matrix if isinstance(prompts, VisualPromptSet) else prompts
        batch = matrix[None].expand(n, -1, -1)
        return self.decode_batch(batch, cfg, sample=True, generator=generator)

    def greedy_batch(self, prompts, cfg):
        """Greedy captions for a (B, k, d2) prompt tensor."""
        return self.decode_batch(prompts, cfg, sample=False)

    def sample_batch(self, prompts, cfg, n, generator=None):
        """``n`` sampled captions per prompt set, grouped by image: the
        result holds B lists of n samples."""
        if n < 1:
            raise InputError("Number of samples must be at least 1", n=n)
        repeated = prompts.repeat_interleave(n, dim=0)
        flat = self.decode_batch(repeated, cfg, sample=True, generator=generator)
        return [flat[i * n : (i + 1) * n] for i in range(prompts.shape[0])]

    def score_tokens(self, prompts, token_ids, temperature=1.0):
        """Teacher-forced re-scoring of token sequences. Returns the (B, T)
        per-step log-probabilities, with gradients, and the (B, T) mask of
        real (non-padding) positions."""
        if len(token_ids) != prompts.shape[0]:
            raise InputError("One token sequence per prompt set is required")
        lengths = [len(ids) for ids in token_ids]
        if min(lengths) < 1:
            raise InputError("Cannot score an empty token sequence")
        width = max(lengths)
        shape = (len(token_ids), width)
        padded = torch.full(shape, self.eos_token_id, dtype=torch.long)
        for i, ids in enumerate(token_ids):
            padded[i, : len(ids)] = torch.as_tensor(ids, dtype=torch.long)
        padded = padded.to(prompts.device)
        mask = torch.arange(width)[None, :] < torch.as_tensor(lengths)[:, None]
        mask = mask.to(prompts.device)
        k = prompts.shape[1]
        inputs = torch.cat([prompts, self.decoder.embed_tokens(padded[:, :-1])], dim=1)
        logits = self.decoder(inputs)[:, k - 1 : k - 1 + width, :]
        log_probs = torch.log_softmax(logits / temperature, dim=-1)
        chosen = log_probs.gather(2, padded[:, :, None]).squeeze(2)
        return chosen * mask, mask

    def sequence_log_probs(self, prompts, token_ids, temperature=1.0):
        """Sum of per-step log-probabilities of each sequence, with grads."""
        chosen, _ = self.score_tokens(prompts, token_ids, temperature=temperature)
        return chosen.sum(dim=1)

    def reconstruction_loss(
        self, embeddings, texts, max_len, noise=0.0, generator=None
    ):
        """Mean token-level negative log-likelihood of ``texts`` conditioned
        on prompts computed from ``embeddings`` (B, d1)."""
        embeddings = self._as_tensor(embeddings)
        if noise > 0:
            jitter = torch.randn(
                embeddings.shape, generator=generator, dtype=embeddings.dtype
            ).to(embeddings.device)
            embeddings = embeddings + noise * jitter
        token_ids = [self.encode_caption(t, max_len) for t in texts]
        chosen, mask = self.score_tokens(self.mapper(embeddings), token_ids)
        return -chosen.sum() / mask.sum()

    def init_reconstruction_loss(self, sentence, backend, max_len=None):
        """Reconstruction loss of one corpus sentence from its own text
        embedding, in nats per token."""
        max_len = max_len or self.config.max_len
        embedding = backend.encode_text(sentence)
        with torch.no_grad():
            texts = [sentence_text(sentence)]
            loss = self.reconstruction_loss([embedding], texts, max_len)
        return float(loss)


def build_generator(config, d1, seed=0, vocabulary=None):
    """Construct a generator from its config. The toy decoder needs the
    toy vocabulary; any other decoder id is loaded from Hugging Face."""
    torch.manual_seed(seed)
    if config.decoder == "toy":
        if vocabulary is None:
            raise ConfigError("The toy decoder needs a vocabulary")
        decoder = TinyDecoder(
            WordTokenizer(vocabulary),
            config.d2,
            layers=config.layers,
            heads=config.heads,
            max_positions=config.k + config.max_len + 1,
        )
    else:
        decoder = PretrainedDecoder(config.decoder)
    mapper = PromptMapper(d1, config.mlp_hidden, config.k, config.d2)
    generator = CaptionGenerator(mapper, decoder, config)
    return generator.to(settings.DEVICE)
