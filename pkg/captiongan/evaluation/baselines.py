import structlog
import numpy as np

from captiongan.exc import InputError, StateError
from captiongan.core.export import read_objects, write_object

log = structlog.get_logger(__name__)


def _check(images, table):
    if not len(table):
        raise InputError("Corpus table is empty")
    for image_id, vector in images:
        if vector.fingerprint is not None and vector.fingerprint != table.fingerprint:
            raise StateError(
                "Image embedding and corpus table come from different encoders",
                image_id=image_id,
                expected=table.fingerprint,
                found=vector.fingerprint,
            )


def retrieve(images, table):
    """Index of the most similar corpus row for every image; ties go to
    the lowest row index."""
    _check(images, table)
    return [(image_id, int(np.argmax(table.similarities(v)))) for image_id, v in images]


def clip_retrieval_baseline(images, table):
    """Caption every image with its highest-cosine corpus sentence.
    ``images`` are (image id, EmbeddingVector) pairs."""
    picks = retrieve(images, table)
    log.info("Retrieval baseline", images=len(picks), corpus=len(table))
    return {image_id: table.texts[idx] for image_id, idx in picks}


def clip_pseudo_labels(images, table):
    """Retrieval applied to training images, as (image id, caption) pairs
    in input order."""
    picks = retrieve(images, table)
    return [(image_id, table.texts[idx]) for image_id, idx in picks]


def write_pseudo_labels(path, pairs):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, caption in pairs:
            write_object(fh, {"image_id": image_id, "caption": caption})
    return path


def load_pseudo_labels(path):
    pairs = []
    for obj in read_objects(path):
        if "image_id" not in obj or not obj.get("caption"):
            raise InputError(
                "Pseudo-label row needs image_id and caption", path=str(path)
            )
        pairs.append((obj["image_id"], obj["caption"]))
    return pairs
