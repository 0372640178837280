from captiongan.embeddings.types import EmbeddingConfig, ToyWorldSpec
from captiongan.embeddings.types import EmbeddingVector, ImageRecord, SentenceRecord
from captiongan.embeddings.backend import EmbeddingBackend, get_backend
from captiongan.embeddings.toy import ToyBackend, ToyWorld
from captiongan.embeddings.table import CorpusEmbeddingTable, build_corpus_table

__all__ = [
    "EmbeddingConfig",
    "ToyWorldSpec",
    "EmbeddingVector",
    "ImageRecord",
    "SentenceRecord",
    "EmbeddingBackend",
    "get_backend",
    "ToyBackend",
    "ToyWorld",
    "CorpusEmbeddingTable",
    "build_corpus_table",
]
