import structlog
import numpy as np
from pathlib import Path

from captiongan import settings
from captiongan.exc import FormatError, InputError
from captiongan.util import fingerprint
from captiongan.embeddings.table import write_container, read_container
from captiongan.rewards.semantic import AggregateEmbedding, aggregate

log = structlog.get_logger(__name__)


class AggregateCache(object):
    """On-disk store of per-image aggregates. One container file holds every
    image aggregated against one (corpus table, temperature) pair, with a
    row per image id."""

    KIND = "aggregate"

    def __init__(self, root=None):
        self.root = Path(root or settings.CACHE_PATH.joinpath("aggregates"))

    def path_for(self, table_fingerprint, temperature):
        key = fingerprint(table_fingerprint, repr(float(temperature)))
        return self.root.joinpath(f"agg-{key[:24]}.emb")

    def load(self, table_fingerprint, temperature):
        """All cached aggregates for the pair, keyed by image id."""
        path = self.path_for(table_fingerprint, temperature)
        if not path.exists():
            return {}
        header, matrix, rows = read_container(path)
        if header.get("kind") != self.KIND:
            raise FormatError("File is not an aggregate cache", path=path.as_posix())
        if header.get("fingerprint") != table_fingerprint:
            raise FormatError("Aggregate cache key mismatch", path=path.as_posix())
        if header.get("temperature") != float(temperature):
            raise FormatError("Aggregate cache key mismatch", path=path.as_posix())
        cached = {}
        for idx, row in enumerate(rows):
            cached[row["id"]] = AggregateEmbedding(
                matrix[idx],
                image_id=row["id"],
                temperature=float(temperature),
                fingerprint=table_fingerprint,
            )
        return cached

    def store(self, table_fingerprint, temperature, aggregates, config=None):
        """Merge ``aggregates`` into the cache file for the pair. The file is
        replaced atomically; ids are written in sorted order."""
        merged = self.load(table_fingerprint, temperature)
        for agg in aggregates:
            merged[agg.image_id] = agg
        if not len(merged):
            raise InputError("No aggregates to store")
        ids = sorted(merged)
        matrix = np.stack([merged[i].values for i in ids])
        header = {
            "kind": self.KIND,
            "fingerprint": table_fingerprint,
            "temperature": float(temperature),
            "config": config,
        }
        path = self.path_for(table_fingerprint, temperature)
        write_container(path, header, matrix, [{"id": i} for i in ids])
        log.info("Stored aggregates", path=path, images=len(ids))
        return path

    def get_or_build(self, images, table, temperature, config=None):
        """Aggregates for (image id, EmbeddingVector) pairs, computing and
        storing the ones not yet cached."""
        cached = self.load(table.fingerprint, temperature)
        missing = []
        for image_id, vector in images:
            if image_id not in cached:
                agg = aggregate(vector, table, temperature, image_id=image_id)
                missing.append(agg)
                cached[image_id] = agg
        if len(missing):
            log.info("Aggregating images", images=len(missing), tau=temperature)
            self.store(table.fingerprint, temperature, missing, config=config)
            # Reload so that fresh and cached runs see identical float32 rows.
            cached = self.load(table.fingerprint, temperature)
        return {image_id: cached[image_id] for image_id, _ in images}
