import math
import structlog
from collections import Counter

from captiongan.exc import ConfigError
from captiongan.evaluation.types import align
from captiongan.evaluation.bleu import ngram_counts

log = structlog.get_logger(__name__)

ORDER = 4
SIGMA = 6.0
FLAVORS = ("coco", "cider-d")


class CiderScorer(object):
    """Consensus tf-idf scoring of candidates against their references.

    The ``coco`` flavour reproduces the COCO caption tools' CIDEr: plain
    tf-idf cosine, averaged over n-gram orders and references and scaled by
    ten. ``cider-d`` clips candidate weights by the reference weights and
    applies a Gaussian penalty on the length difference."""

    def __init__(self, flavor="coco", n=ORDER, sigma=SIGMA):
        if flavor not in FLAVORS:
            raise ConfigError(f"Unknown CIDEr flavour: {flavor}")
        self.flavor = flavor
        self.n = n
        self.sigma = sigma

    def _document_frequency(self, cooked_refs):
        df = Counter()
        for refs in cooked_refs:
            for ngram in set(ngram for ref in refs for ngram in ref):
                df[ngram] += 1
        return df

    def _vector(self, counts, df, ref_len):
        vec = [dict() for _ in range(self.n)]
        norm = [0.0] * self.n
        length = 0
        for ngram, tf in counts.items():
            idf = math.log(max(1.0, df[ngram]))
            k = len(ngram) - 1
            vec[k][ngram] = tf * (ref_len - idf)
            norm[k] += vec[k][ngram] ** 2
            # The tools count bigrams here, not words.
            if k == 1:
                length += tf
        return vec, [math.sqrt(v) for v in norm], length

    def _similarity(self, hyp, ref):
        vec_hyp, norm_hyp, len_hyp = hyp
        vec_ref, norm_ref, len_ref = ref
        delta = float(len_hyp - len_ref)
        values = [0.0] * self.n
        for k in range(self.n):
            for ngram, weight in vec_hyp[k].items():
                ref_weight = vec_ref[k].get(ngram, 0.0)
                if self.flavor == "cider-d":
                    values[k] += min(weight, ref_weight) * ref_weight
                else:
                    values[k] += weight * ref_weight
            if norm_hyp[k] != 0 and norm_ref[k] != 0:
                values[k] /= norm_hyp[k] * norm_ref[k]
            if self.flavor == "cider-d":
                values[k] *= math.exp(-(delta ** 2) / (2 * self.sigma ** 2))
        return values

    def score(self, candidates, refs):
        """Corpus CIDEr (mean of the per-image scores) and the per-image
        scores, over pre-tokenized captions."""
        pairs = align(candidates, refs)
        if len(pairs) < 2:
            log.warning(
                "CIDEr on a single image: every n-gram has zero idf",
                images=len(pairs),
            )
        cooked_refs = [
            [ngram_counts(r.split(), self.n) for r in references]
            for _, _, references in pairs
        ]
        df = self._document_frequency(cooked_refs)
        ref_len = math.log(float(len(pairs)))
        per_image = {}
        for (image_id, candidate, _), refs_counts in zip(pairs, cooked_refs):
            hyp = self._vector(ngram_counts(candidate.split(), self.n), df, ref_len)
            totals = [0.0] * self.n
            for counts in refs_counts:
                ref = self._vector(counts, df, ref_len)
                for k, value in enumerate(self._similarity(hyp, ref)):
                    totals[k] += value
            score = sum(totals) / self.n
            score /= len(refs_counts)
            per_image[image_id] = score * 10.0
        return sum(per_image.values()) / len(per_image), per_image


def cider(candidates, refs, flavor="coco"):
    score, _ = CiderScorer(flavor=flavor).score(candidates, refs)
    return score
