import structlog
from concurrent.futures import ThreadPoolExecutor

from captiongan.exc import InputError, StateError, ConfigError
from captiongan.embeddings.types import SentenceRecord

log = structlog.get_logger(__name__)


class EmbeddingBackend(object):
    """Uniform interface over image/text encoders of a shared contrastive
    space. Backends are immutable once constructed, so encoding may be
    fanned out to worker threads."""

    name = None

    def __init__(self, d1, fingerprint):
        self.d1 = d1
        self.fingerprint = fingerprint

    def encode_image(self, image):
        raise NotImplementedError

    def encode_text(self, sentence):
        raise NotImplementedError

    def encode_images(self, images, workers=1):
        return self._map(self.encode_image, images, workers)

    def encode_texts(self, sentences, workers=1):
        return self._map(self.encode_text, sentences, workers)

    def _map(self, func, items, workers):
        items = list(items)
        if workers <= 1 or len(items) < 2:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))

    def check_fingerprint(self, fingerprint, what="table"):
        if fingerprint != self.fingerprint:
            raise StateError(
                f"Embedding {what} was built with a different encoder",
                expected=self.fingerprint,
                found=fingerprint,
            )

    def to_dict(self):
        return {"name": self.name, "d1": self.d1, "fingerprint": self.fingerprint}


def sentence_text(sentence):
    """Accept either a SentenceRecord or a plain string."""
    if isinstance(sentence, SentenceRecord):
        return sentence.text
    if sentence is None or not len(str(sentence).strip()):
        raise InputError("Sentence text is empty")
    return str(sentence)


def get_backend(config):
    """Instantiate the encoder named by an EmbeddingConfig."""
    from captiongan.embeddings.toy import ToyBackend

    if config.backend == "toy":
        return ToyBackend(config.toy_spec)
    if config.backend.startswith("pretrained:"):
        from captiongan.embeddings.pretrained import PretrainedBackend

        model_id = config.backend.split(":", 1)[1]
        return PretrainedBackend(model_id, batch_size=config.batch_size)
    raise ConfigError(f"Unknown embedding backend: {config.backend}")
