from captiongan.evaluation.types import ReferenceSet
from captiongan.evaluation.bleu import bleu, bleu4
from captiongan.evaluation.rouge import rouge_l
from captiongan.evaluation.cider import cider, CiderScorer
from captiongan.evaluation.baselines import clip_retrieval_baseline, clip_pseudo_labels
from captiongan.evaluation.report import EvalConfig, MetricReport
from captiongan.evaluation.report import evaluate, emit_report, load_report

__all__ = [
    "ReferenceSet",
    "bleu",
    "bleu4",
    "rouge_l",
    "cider",
    "CiderScorer",
    "clip_retrieval_baseline",
    "clip_pseudo_labels",
    "EvalConfig",
    "MetricReport",
    "evaluate",
    "emit_report",
    "load_report",
]
