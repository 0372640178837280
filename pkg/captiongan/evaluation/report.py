import math
import json
import structlog
from pathlib import Path
from datetime import datetime
from typing import Any, Dict, Optional
from dataclasses import dataclass, field

from captiongan.exc import InputError, ConfigError, FormatError
from captiongan.core.export import write_json, write_csv, write_object
from captiongan.core.export import read_objects, flatten_row
from captiongan.evaluation.tokenize import normalize_all
from captiongan.evaluation.types import ReferenceSet, align
from captiongan.evaluation.bleu import bleu
from captiongan.evaluation.rouge import rouge_l_scores
from captiongan.evaluation.cider import CiderScorer, FLAVORS
from captiongan.evaluation.external import external_scores, EXTERNAL_METRICS
from captiongan.rewards.semantic import reward_cos

log = structlog.get_logger(__name__)

NATIVE_METRICS = ("BLEU_1", "BLEU_2", "BLEU_3", "BLEU_4", "ROUGE_L", "CIDEr")


@dataclass(frozen=True)
class EvalConfig:
    cider_flavor: str = "coco"
    external: bool = True
    split: str = "test"
    tokenize: bool = True

    def __post_init__(self):
        if self.cider_flavor not in FLAVORS:
            raise ConfigError(f"Unknown CIDEr flavour: {self.cider_flavor}")


@dataclass
class MetricReport:
    """Corpus-level caption metrics with per-image CIDEr. Metrics that
    could not be computed are None."""

    scores: Dict[str, Optional[float]]
    per_image_cider: Dict[str, float]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.scores.items():
            if value is not None and not math.isfinite(value):
                raise InputError("Metric is not finite", metric=name)
        if not 0.0 <= self.scores.get("BLEU_4", 0.0) <= 1.0:
            raise InputError("BLEU-4 outside [0, 1]")
        if self.scores.get("CIDEr", 0.0) < 0:
            raise InputError("CIDEr is negative")

    @property
    def unavailable(self):
        return sorted(k for k, v in self.scores.items() if v is None)

    def to_dict(self):
        return {
            "scores": self.scores,
            "per_image_cider": self.per_image_cider,
            "unavailable": self.unavailable,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            scores=dict(data["scores"]),
            per_image_cider=dict(data["per_image_cider"]),
            meta=dict(data.get("meta", {})),
        )

    def to_row(self):
        """Flat mapping for CSV collation."""
        row = dict(flatten_row(self.meta, prefix="meta"))
        row.update(self.scores)
        return row


def evaluate(candidates, refs, cfg=None, meta=None):
    """Score a map of image id to caption against the references."""
    cfg = cfg or EvalConfig()
    refs = ReferenceSet(refs)
    align(candidates, refs)
    if cfg.tokenize:
        candidates = normalize_all(candidates)
        refs = normalize_all(refs)
    bleus, _ = bleu(candidates, refs)
    rouge, _ = rouge_l_scores(candidates, refs)
    cider, per_image = CiderScorer(flavor=cfg.cider_flavor).score(candidates, refs)
    scores = {f"BLEU_{k + 1}": float(b) for k, b in enumerate(bleus)}
    scores["ROUGE_L"] = float(rouge)
    scores["CIDEr"] = float(cider)
    if cfg.external:
        scores.update(external_scores(candidates, refs))
    else:
        scores.update({name: None for name in EXTERNAL_METRICS})
    info = {
        "split": cfg.split,
        "images": len(candidates),
        "cider_flavor": cfg.cider_flavor,
        "timestamp": datetime.utcnow().isoformat(),
    }
    info.update(meta or {})
    per_image = {str(k): float(v) for k, v in per_image.items()}
    log.info("Evaluated captions", images=len(candidates), cider=scores["CIDEr"])
    return MetricReport(scores=scores, per_image_cider=per_image, meta=info)


def emit_report(report, path):
    """Write the report as JSON, plus a one-row CSV next to it."""
    if not len(report.per_image_cider):
        raise InputError("Report has no evaluated images")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        write_json(report.to_dict(), fh)
    csv_path = path.with_suffix(".csv")
    write_csv(csv_path, [report.to_row()])
    log.info("Wrote report", path=path)
    return path, csv_path


def load_report(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return MetricReport.from_dict(json.load(fh))
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError("Cannot read metric report", path=str(path)) from exc


def write_candidates(path, candidates):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(candidates, key=str):
            write_object(fh, {"image_id": image_id, "caption": candidates[image_id]})
    return path


def load_candidates(path):
    candidates = {}
    for obj in read_objects(path):
        if "image_id" not in obj or "caption" not in obj:
            raise InputError("Candidate row needs image_id and caption", path=str(path))
        if obj["image_id"] in candidates:
            raise InputError("Duplicate candidate", image_id=obj["image_id"])
        candidates[obj["image_id"]] = obj["caption"]
    return candidates


def alignment(backend, images, candidates):
    """Mean cosine between each image embedding and the embedding of its
    caption, as a label-free alignment measure."""
    pairs = [(v, candidates[i]) for i, v in images if i in candidates]
    if not len(pairs):
        raise InputError("No captions for the given images")
    captions = backend.encode_texts([c if c.strip() else "." for _, c in pairs])
    values = [reward_cos(v, c) for (v, _), c in zip(pairs, captions)]
    return math.fsum(values) / len(values)
