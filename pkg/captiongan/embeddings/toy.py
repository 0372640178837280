import re
import zlib
import numpy as np
from banal import is_mapping

from captiongan.exc import InputError
from captiongan.util import fingerprint
from captiongan.embeddings.types import EmbeddingVector, ImageRecord, SentenceRecord
from captiongan.embeddings.backend import EmbeddingBackend, sentence_text

EOS = "."
TOKEN_RE = re.compile(r"[^\s.]+|\.")
# Caption template of the toy language: one word from each slot, then EOS.
SLOTS = 4


def toy_vocabulary(vocab_size):
    """Token list of the toy language. Index 0 is the end-of-sentence
    token, all other tokens are words."""
    return [EOS] + ["w%d" % i for i in range(1, vocab_size)]


def tokenize_words(text):
    return TOKEN_RE.findall(text.lower())


class ToyBackend(EmbeddingBackend):
    """Synthetic aligner: a text embedding is a seeded random projection of
    the token-count vector, and an image is a noisy copy of the embedding of
    its hidden caption. The backend is a pure function of its spec."""

    name = "toy"

    def __init__(self, spec, projection=None):
        self.spec = spec
        self.vocabulary = toy_vocabulary(spec.vocab_size)
        self.index = {t: i for i, t in enumerate(self.vocabulary)}
        if projection is None:
            rng = np.random.default_rng(spec.projection_seed)
            projection = rng.standard_normal((spec.vocab_size, spec.d1))
            key = None
        else:
            projection = np.array(projection, dtype=np.float64)
            key = fingerprint(projection.tolist())
        if projection.shape != (spec.vocab_size, spec.d1):
            raise InputError("Projection shape must be vocab_size x d1")
        self.projection = projection
        self.projection.setflags(write=False)
        fp = fingerprint("toy", spec.vocab_size, spec.d1, spec.projection_seed, key)
        super().__init__(spec.d1, fp)

    def token_index(self, token):
        index = self.index.get(token)
        if index is None:
            # out-of-vocabulary words hash onto a word slot
            index = 1 + zlib.crc32(token.encode("utf-8")) % (self.spec.vocab_size - 1)
        return index

    def count_vector(self, text):
        tokens = tokenize_words(text)
        if not len(tokens):
            raise InputError("Sentence has no tokens", text=text)
        counts = np.zeros(self.spec.vocab_size, dtype=np.float64)
        for token in tokens:
            counts[self.token_index(token)] += 1
        return counts

    def _text_unit(self, text):
        raw = self.count_vector(text) @ self.projection
        return raw / np.linalg.norm(raw)

    def encode_text(self, sentence):
        text = sentence_text(sentence)
        return EmbeddingVector(self._text_unit(text), fingerprint=self.fingerprint)

    def encode_image(self, image):
        payload = image.payload if isinstance(image, ImageRecord) else image
        if not is_mapping(payload) or "caption" not in payload:
            raise InputError("Toy image payload needs a hidden caption", image=image)
        caption = payload["caption"]
        noise_scale = payload.get("noise_scale", self.spec.noise_scale)
        if noise_scale == 0:
            return self.encode_text(caption)
        rng = np.random.default_rng(int(payload.get("seed", 0)))
        noise = rng.standard_normal(self.spec.d1) / np.sqrt(self.spec.d1)
        raw = self._text_unit(caption) + noise_scale * noise
        return EmbeddingVector.from_raw(raw, fingerprint=self.fingerprint)


class ToyWorld(object):
    """Generator of a toy captioning task: a slot grammar over the toy
    vocabulary, images whose hidden captions come from that grammar, and an
    unpaired corpus sampled independently from the same grammar."""

    def __init__(self, spec, seed=11):
        self.spec = spec
        self.seed = seed
        words = toy_vocabulary(spec.vocab_size)[1:]
        slots = min(SLOTS, len(words))
        self.slots = [words[i::slots] for i in range(slots)]

    def sentence(self, rng):
        words = [slot[rng.integers(len(slot))] for slot in self.slots]
        return " ".join(words + [EOS])

    def sentences(self, count, rng):
        return [self.sentence(rng) for _ in range(count)]

    def images(self, count, rng, prefix="img", noise_scale=None):
        images = []
        for i, caption in enumerate(self.sentences(count, rng)):
            payload = {"caption": caption, "seed": int(rng.integers(2 ** 31))}
            if noise_scale is not None:
                payload["noise_scale"] = noise_scale
            images.append(ImageRecord(id="%s-%05d" % (prefix, i), payload=payload))
        return images

    def generate(self, n_images, n_sentences, n_eval=100):
        """Build the training images, the unpaired corpus, held-out images
        and references (the hidden captions) for all images."""
        rng = np.random.default_rng(self.seed)
        images = self.images(n_images, rng, prefix="img")
        eval_images = self.images(n_eval, rng, prefix="eval")
        corpus = [
            SentenceRecord(id="s%06d" % i, text=text)
            for i, text in enumerate(self.sentences(n_sentences, rng))
        ]
        refs = {}
        for image in images + eval_images:
            refs[image.id] = [image.payload["caption"]]
        return images, corpus, eval_images, refs
