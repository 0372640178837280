import shutil
import structlog

log = structlog.get_logger(__name__)

EXTERNAL_METRICS = ("METEOR", "SPICE")


def _load_scorer(name):
    if name == "METEOR":
        from pycocoevalcap.meteor.meteor import Meteor

        return Meteor()
    from pycocoevalcap.spice.spice import Spice

    return Spice()


def java_available():
    return shutil.which("java") is not None


def external_scores(candidates, refs, metrics=EXTERNAL_METRICS):
    """Run the official Java-based scorers on pre-tokenized captions. A
    metric whose tool is not installed, or fails, is reported as None."""
    results = {name: None for name in metrics}
    if not java_available():
        log.info("No Java runtime, external metrics unavailable", metrics=list(metrics))
        return results
    gts = {str(k): list(refs[k]) for k in candidates}
    res = {str(k): [candidates[k]] for k in candidates}
    for name in metrics:
        try:
            scorer = _load_scorer(name)
            score, _ = scorer.compute_score(gts, res)
        except ImportError:
            log.info("Scorer not installed", metric=name)
            continue
        except Exception as exc:
            log.warning("External scorer failed", metric=name, error=str(exc))
            continue
        results[name] = float(score)
    return results
