import torch
import structlog
from torch import nn

from captiongan.exc import InputError, ConfigError
from captiongan.embeddings.toy import tokenize_words

log = structlog.get_logger(__name__)


class WordTokenizer(object):
    """Whitespace/period tokenizer over a closed word list, used by the toy
    decoder and the toy sentence encoder."""

    def __init__(self, vocabulary):
        self.vocabulary = list(vocabulary)
        self.index = {t: i for i, t in enumerate(self.vocabulary)}

    def __len__(self):
        return len(self.vocabulary)

    def encode(self, text):
        ids = []
        for token in tokenize_words(text):
            if token not in self.index:
                raise InputError("Token is not in the vocabulary", token=token)
            ids.append(self.index[token])
        return ids

    def decode(self, ids):
        return " ".join(self.vocabulary[i] for i in ids)

    def token_id(self, token):
        ids = self.encode(token)
        if len(ids) != 1:
            raise ConfigError("Token must map to exactly one id", token=token)
        return ids[0]

    def token_string(self, idx):
        """Return the display form of a token and whether it continues a
        word rather than starting one."""
        return self.vocabulary[idx], False


class PretrainedTokenizer(object):
    """Adapter around a Hugging Face byte-level BPE tokenizer."""

    WORD_START = "Ġ"

    def __init__(self, tokenizer):
        self.tokenizer = tokenizer

    def __len__(self):
        return len(self.tokenizer)

    def encode(self, text):
        return self.tokenizer.encode(text, add_special_tokens=False)

    def decode(self, ids):
        return self.tokenizer.decode(list(ids)).strip()

    def token_id(self, token):
        ids = self.encode(token)
        if len(ids) != 1:
            raise ConfigError("Token must map to exactly one id", token=token)
        return ids[0]

    def token_string(self, idx):
        token = self.tokenizer.convert_ids_to_tokens(int(idx))
        if token.startswith(self.WORD_START):
            return token[len(self.WORD_START) :], False
        return token, True


class CausalDecoder(nn.Module):
    """Autoregressive language model that consumes input embeddings, so
    that visual prompts can be injected as pseudo-tokens ahead of the text.
    Its token-embedding table is tied to the output projection."""

    tokenizer = None

    @property
    def vocab_size(self):
        return self.token_embeddings.shape[0]

    @property
    def embed_dim(self):
        return self.token_embeddings.shape[1]

    @property
    def token_embeddings(self):
        raise NotImplementedError

    def embed_tokens(self, token_ids):
        return nn.functional.embedding(token_ids, self.token_embeddings)

    def forward(self, inputs_embeds):
        """Map (B, L, d2) input embeddings to (B, L, V) next-token logits."""
        raise NotImplementedError


class TinyDecoder(CausalDecoder):
    """A small pre-norm causal transformer with learned positions, used for
    the toy world and the unit tests."""

    def __init__(self, tokenizer, d2, layers=2, heads=4, max_positions=64):
        super().__init__()
        self.tokenizer = tokenizer
        self.max_positions = max_positions
        self.wte = nn.Embedding(len(tokenizer), d2)
        self.wpe = nn.Embedding(max_positions, d2)
        layer = nn.TransformerEncoderLayer(
            d2,
            heads,
            dim_feedforward=4 * d2,
            dropout=0.0,
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.ln_f = nn.LayerNorm(d2)
        nn.init.normal_(self.wte.weight, std=0.02)
        nn.init.normal_(self.wpe.weight, std=0.02)

    @property
    def token_embeddings(self):
        return self.wte.weight

    def forward(self, inputs_embeds):
        length = inputs_embeds.shape[1]
        if length > self.max_positions:
            raise InputError("Sequence exceeds decoder positions", length=length)
        positions = torch.arange(length, device=inputs_embeds.device)
        hidden = inputs_embeds + self.wpe(positions)[None, :, :]
        mask = torch.triu(
            torch.full((length, length), float("-inf"), device=inputs_embeds.device),
            diagonal=1,
        ).to(hidden.dtype)
        hidden = self.blocks(hidden, mask=mask)
        hidden = self.ln_f(hidden)
        return hidden @ self.wte.weight.t()


class PretrainedDecoder(CausalDecoder):
    """Hugging Face causal language model (GPT-2 by default) driven through
    ``inputs_embeds``; positions 0..k-1 are taken by the visual prompts."""

    def __init__(self, model_id):
        super().__init__()
        from transformers import AutoModelForCausalLM, AutoTokenizer

        log.info("Loading decoder", model=model_id)
        self.model_id = model_id
        self.model = AutoModelForCausalLM.from_pretrained(model_id)
        self.tokenizer = PretrainedTokenizer(AutoTokenizer.from_pretrained(model_id))

    @property
    def token_embeddings(self):
        return self.model.get_input_embeddings().weight

    def forward(self, inputs_embeds):
        return self.model(inputs_embeds=inputs_embeds).logits
