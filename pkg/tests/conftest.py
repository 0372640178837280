import torch
import pytest
import numpy as np

from captiongan import settings
from captiongan.model import connect_db
from captiongan.core.config import RunConfig
from captiongan.embeddings import ToyBackend, ToyWorld, ToyWorldSpec
from captiongan.embeddings import CorpusEmbeddingTable, EmbeddingVector
from captiongan.generator import build_generator, GeneratorConfig
from captiongan.generator import PromptMapper, CaptionGenerator, WordTokenizer
from captiongan.generator.decoder import CausalDecoder
from captiongan.discriminator import build_discriminator


TOY_OVERRIDES = {
    "name": "test",
    "embeddings": {"backend": "toy", "d1": 16, "vocab_size": 12},
    "generator": {
        "decoder": "toy",
        "k": 2,
        "d2": 16,
        "mlp_hidden": 32,
        "max_len": 6,
        "sample_n": 3,
        "layers": 1,
        "heads": 2,
    },
    "discriminator": {
        "encoder": "toy",
        "hidden": 16,
        "head_hidden": 8,
        "heads": 2,
        "max_tokens": 8,
    },
    "rewards": {"warmup_d_only_steps": 2, "ramp_steps": 4},
    "training": {
        "init_lr": 1e-3,
        "init_warmup": 2,
        "init_steps": 4,
        "init_batch_size": 4,
        "gen_lr": 1e-3,
        "gen_warmup": 1,
        "disc_lr": 1e-3,
        "batch_size": 4,
        "steps": 3,
        "log_every": 0,
    },
    "data": {"world_images": 12, "world_sentences": 12},
    "evaluation": {"external": False},
}


@pytest.fixture(autouse=True)
def data_path(tmp_path, monkeypatch):
    """Point every data directory at a fresh temporary folder and bind a
    ledger database inside it."""
    monkeypatch.setattr(settings, "DATA_PATH", tmp_path)
    monkeypatch.setattr(settings, "RUNS_PATH", tmp_path.joinpath("runs"))
    monkeypatch.setattr(settings, "CACHE_PATH", tmp_path.joinpath("cache"))
    uri = "sqlite:///%s" % tmp_path.joinpath("ledger.sqlite3")
    monkeypatch.setattr(settings, "DATABASE_URI", uri)
    connect_db(uri)
    return tmp_path


@pytest.fixture
def toy_config():
    return RunConfig.from_dict(TOY_OVERRIDES)


@pytest.fixture
def toy_spec():
    return ToyWorldSpec(vocab_size=12, d1=16, projection_seed=7, noise_scale=0.1)


@pytest.fixture
def backend(toy_spec):
    return ToyBackend(toy_spec)


@pytest.fixture
def world(toy_spec):
    images, corpus, eval_images, refs = ToyWorld(toy_spec, seed=11).generate(
        12, 12, n_eval=6
    )
    return {
        "images": images,
        "corpus": corpus,
        "eval_images": eval_images,
        "refs": refs,
    }


@pytest.fixture
def generator(toy_config, backend):
    return build_generator(
        toy_config.generator, backend.d1, seed=3, vocabulary=backend.vocabulary
    )


@pytest.fixture
def discriminator(toy_config, backend):
    return build_discriminator(
        toy_config.discriminator, seed=5, vocabulary=backend.vocabulary
    )


def unit_rows(rows):
    matrix = np.asarray(rows, dtype=np.float64)
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


def make_table(rows, fingerprint="fp-test", texts=None):
    matrix = unit_rows(rows)
    ids = ["s%d" % i for i in range(len(matrix))]
    texts = texts or ["sentence %d" % i for i in range(len(matrix))]
    return CorpusEmbeddingTable(ids, texts, matrix, fingerprint)


class BigramDecoder(CausalDecoder):
    """Next-token logits depend only on the previous token; the single
    prompt position acts as the start state (row V of ``transition``)."""

    def __init__(self, vocabulary, transition):
        super().__init__()
        self.tokenizer = WordTokenizer(vocabulary)
        size = len(vocabulary)
        transition = torch.as_tensor(transition, dtype=torch.float32)
        if tuple(transition.shape) != (size + 1, size):
            raise ValueError("transition must be (V + 1) x V")
        self.transition = torch.nn.Parameter(transition.clone())
        table = torch.cat([torch.eye(size), torch.zeros(size, 1)], dim=1)
        self.register_buffer("table", table)

    @property
    def token_embeddings(self):
        return self.table

    def forward(self, inputs_embeds):
        return inputs_embeds @ self.transition


def bigram_generator(vocabulary, transition, d1=4, max_len=4):
    """A generator whose prompt mapper always emits the start state."""
    size = len(vocabulary)
    mapper = PromptMapper(d1, 4, 1, size + 1)
    with torch.no_grad():
        for param in mapper.parameters():
            param.zero_()
        mapper.output.bias[-1] = 1.0
    config = GeneratorConfig(
        decoder="toy", k=1, d2=size + 1, mlp_hidden=4, max_len=max_len
    )
    generator = CaptionGenerator(mapper, BigramDecoder(vocabulary, transition), config)
    return generator.eval()


def start_prompts(generator, d1=4, batch=1):
    embedding = EmbeddingVector.from_raw(np.ones(d1))
    return generator.prompts([embedding] * batch).detach()
