import json
import structlog
from pathlib import Path
from banal import is_mapping

from captiongan.exc import InputError, FormatError
from captiongan.core.export import read_objects, write_object, write_json
from captiongan.embeddings.types import ImageRecord, SentenceRecord

log = structlog.get_logger(__name__)


def _check_unique(records, what):
    seen = set()
    for record in records:
        if record.id in seen:
            raise InputError(f"Duplicate {what} id", id=record.id)
        seen.add(record.id)
    return records


def load_corpus(path):
    """Read a corpus: either JSONL with ``id`` and ``text`` fields, or a
    plain text file with one sentence per line."""
    path = Path(path)
    if not path.exists():
        raise InputError("Corpus file does not exist", path=path.as_posix())
    sentences = []
    if path.suffix in (".jsonl", ".ndjson"):
        try:
            for idx, obj in enumerate(read_objects(path)):
                sentence_id = str(obj.get("id", "s%06d" % idx))
                sentences.append(SentenceRecord(id=sentence_id, text=obj.get("text")))
        except json.JSONDecodeError as exc:
            message = "Corpus is not valid JSONL"
            raise FormatError(message, path=path.as_posix()) from exc
    else:
        with open(path, "r", encoding="utf-8") as fh:
            for idx, line in enumerate(fh):
                line = line.strip()
                if not len(line):
                    continue
                sentences.append(SentenceRecord(id="s%06d" % idx, text=line))
    log.info("Loaded corpus", path=path, sentences=len(sentences))
    return _check_unique(sentences, "sentence")


def write_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in sentences:
            write_object(fh, sentence.to_dict())


def load_images(path):
    """Read an image set from JSONL: ``{"id": ..., "payload": ...}``, where
    a bare ``path`` or ``url`` field is accepted as the payload."""
    path = Path(path)
    if not path.exists():
        raise InputError("Image list does not exist", path=path.as_posix())
    images = []
    try:
        for obj in read_objects(path):
            if not is_mapping(obj) or "id" not in obj:
                raise InputError("Image entry needs an id", path=path.as_posix())
            payload = obj.get("payload", obj.get("path", obj.get("url")))
            if payload is None:
                raise InputError("Image entry has no payload", image=obj["id"])
            images.append(ImageRecord(id=str(obj["id"]), payload=payload))
    except json.JSONDecodeError as exc:
        message = "Image list is not valid JSONL"
        raise FormatError(message, path=path.as_posix()) from exc
    return _check_unique(images, "image")


def write_images(path, images):
    with open(path, "w", encoding="utf-8") as fh:
        for image in images:
            write_object(fh, image.to_dict())


def load_references(path):
    """Read references: a JSON map from image id to a list of captions."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError("References are not valid JSON", path=str(path)) from exc
    refs = {}
    for image_id, captions in data.items():
        if isinstance(captions, str):
            captions = [captions]
        captions = [c for c in captions if c is not None and len(c.strip())]
        if not len(captions):
            raise InputError("Image has no references", image=image_id)
        refs[str(image_id)] = captions
    return refs


def write_references(path, refs):
    with open(path, "w", encoding="utf-8") as fh:
        write_json(refs, fh)
