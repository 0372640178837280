import json
import struct
import structlog
import numpy as np
from pathlib import Path

from captiongan.exc import CaptionError, InputError, FormatError
from captiongan.core.export import read_objects, atomic_write
from captiongan.embeddings.types import EmbeddingVector, NORM_TOLERANCE

log = structlog.get_logger(__name__)

MAGIC = b"EMBTAB01"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f4")


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".jsonl")


def write_container(path, header, matrix, rows):
    """Write a binary matrix container: magic bytes, a little-endian uint32
    header length, the JSON header, then the row-major float32 matrix. The
    per-row metadata goes to a JSONL sidecar next to it."""
    matrix = np.ascontiguousarray(matrix, dtype=DTYPE)
    header = dict(header)
    header["count"] = int(matrix.shape[0])
    header["d1"] = int(matrix.shape[1])
    header["version"] = FORMAT_VERSION
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":"))
    encoded = encoded.encode("utf-8")

    def write_matrix(fh):
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        fh.write(matrix.tobytes(order="C"))

    def write_rows(fh):
        for row in rows:
            line = json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n"
            fh.write(line.encode("utf-8"))

    atomic_write(sidecar_path(path), write_rows)
    atomic_write(path, write_matrix)


def read_container(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError("Cannot read embedding file", path=path.as_posix()) from exc
    offset = len(MAGIC) + 4
    if len(data) < offset or data[: len(MAGIC)] != MAGIC:
        raise FormatError("Not an embedding container", path=path.as_posix())
    (length,) = struct.unpack("<I", data[len(MAGIC) : offset])
    try:
        header = json.loads(data[offset : offset + length].decode("utf-8"))
        count, d1 = int(header["count"]), int(header["d1"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise FormatError("Corrupt container header", path=path.as_posix()) from exc
    if header.get("version") != FORMAT_VERSION:
        raise FormatError(
            "Unsupported container version", version=header.get("version")
        )
    body = data[offset + length :]
    if len(body) != count * d1 * DTYPE.itemsize:
        raise FormatError(
            "Truncated or oversized embedding matrix",
            path=path.as_posix(),
            expected=count * d1 * DTYPE.itemsize,
            found=len(body),
        )
    matrix = np.frombuffer(body, dtype=DTYPE).reshape(count, d1).copy()
    try:
        rows = list(read_objects(sidecar_path(path)))
    except (OSError, ValueError) as exc:
        raise FormatError("Cannot read row sidecar", path=path.as_posix()) from exc
    if len(rows) != count:
        raise FormatError("Row sidecar does not match matrix", path=path.as_posix())
    return header, matrix, rows


class CorpusEmbeddingTable(object):
    """Normalised text embeddings of every corpus sentence, in corpus order,
    tagged with the fingerprint of the encoder that produced them."""

    KIND = "corpus"

    def __init__(self, ids, texts, matrix, fingerprint, meta=None):
        matrix = np.array(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[0] != len(ids) or len(ids) != len(texts):
            raise InputError("Table rows, ids and texts must align")
        if not len(ids):
            raise InputError("Corpus table is empty")
        norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
            raise InputError("Corpus table rows must be unit-norm")
        self.ids = list(ids)
        self.texts = list(texts)
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self.fingerprint = fingerprint
        self.meta = dict(meta or {})

    @property
    def d1(self):
        return int(self.matrix.shape[1])

    @property
    def rows(self):
        for idx, (sentence_id, text) in enumerate(zip(self.ids, self.texts)):
            vector = EmbeddingVector(self.matrix[idx], fingerprint=self.fingerprint)
            yield (sentence_id, vector, text)

    def vector(self, idx):
        return EmbeddingVector(self.matrix[idx], fingerprint=self.fingerprint)

    def similarities(self, vector):
        """Cosine of every row against a unit-norm query, in float64."""
        values = vector.values if isinstance(vector, EmbeddingVector) else vector
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.d1,):
            raise InputError(
                "Query dimension does not match the table", expected=self.d1
            )
        return self.matrix.astype(np.float64) @ values

    def nearest(self, vector, top=1):
        """Row indices of the ``top`` most similar sentences, best first.
        Equal scores keep row order."""
        scores = self.similarities(vector)
        order = np.argsort(-scores, kind="stable")
        return [(int(i), float(scores[i])) for i in order[:top]]

    def check(self, backend):
        backend.check_fingerprint(self.fingerprint, what="corpus table")

    def save(self, path):
        header = {"kind": self.KIND, "fingerprint": self.fingerprint, "meta": self.meta}
        rows = [{"id": i, "text": t} for i, t in zip(self.ids, self.texts)]
        write_container(path, header, self.matrix, rows)
        log.info("Saved corpus table", path=Path(path), rows=len(self))

    @classmethod
    def load(cls, path):
        header, matrix, rows = read_container(path)
        if header.get("kind") != cls.KIND:
            raise FormatError("File is not a corpus table", kind=header.get("kind"))
        ids = [r.get("id") for r in rows]
        texts = [r.get("text") for r in rows]
        return cls(ids, texts, matrix, header.get("fingerprint"), header.get("meta"))

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, CorpusEmbeddingTable):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.texts == other.texts
            and self.fingerprint == other.fingerprint
            and self.matrix.shape == other.matrix.shape
            and self.matrix.tobytes() == other.matrix.tobytes()
        )


def build_corpus_table(corpus, backend, workers=1, meta=None):
    """Encode a corpus into a table, one row per sentence in corpus order.
    The first sentence that cannot be encoded aborts the build."""
    corpus = list(corpus)
    if not len(corpus):
        raise InputError("Corpus is empty")
    if len(set(s.id for s in corpus)) != len(corpus):
        raise InputError("Corpus sentence ids must be unique")
    try:
        vectors = backend.encode_texts(corpus, workers=workers)
    except CaptionError:
        for sentence in corpus:
            try:
                backend.encode_text(sentence)
            except CaptionError as exc:
                raise InputError(
                    "Cannot encode corpus sentence",
                    sentence_id=sentence.id,
                    reason=exc.message,
                ) from exc
        raise
    matrix = np.stack([v.values for v in vectors]).astype(np.float32)
    ids = [s.id for s in corpus]
    texts = [s.text for s in corpus]
    log.info("Encoded corpus", sentences=len(ids), backend=backend.name)
    return CorpusEmbeddingTable(ids, texts, matrix, backend.fingerprint, meta=meta)
