import math
from collections import Counter

from captiongan.evaluation.types import align

ORDER = 4
# Smoothing constants of the COCO caption tools.
TINY = 1e-15
SMALL = 1e-9


def ngram_counts(words, n=ORDER):
    counts = Counter()
    for k in range(1, n + 1):
        for i in range(len(words) - k + 1):
            counts[tuple(words[i : i + k])] += 1
    return counts


def closest_length(ref_lengths, length):
    """Reference length closest to ``length``; ties go to the shorter."""
    return min((abs(r - length), r) for r in ref_lengths)[1]


def bleu_stats(candidate, references, n=ORDER):
    """Clipped n-gram matches, candidate n-gram totals and the lengths
    of one tokenized candidate against its tokenized references."""
    words = candidate.split()
    max_counts = Counter()
    ref_lengths = []
    for ref in references:
        ref_words = ref.split()
        ref_lengths.append(len(ref_words))
        for ngram, count in ngram_counts(ref_words, n).items():
            max_counts[ngram] = max(max_counts[ngram], count)
    correct = [0] * n
    for ngram, count in ngram_counts(words, n).items():
        correct[len(ngram) - 1] += min(max_counts.get(ngram, 0), count)
    guess = [max(0, len(words) - k + 1) for k in range(1, n + 1)]
    return {
        "testlen": len(words),
        "reflen": closest_length(ref_lengths, len(words)),
        "guess": guess,
        "correct": correct,
    }


def combine(correct, guess, testlen, reflen, n=ORDER):
    """Cumulative BLEU-1..n with the brevity penalty applied."""
    scores = []
    product = 1.0
    for k in range(n):
        product *= (correct[k] + TINY) / (guess[k] + SMALL)
        scores.append(product ** (1.0 / (k + 1)))
    ratio = (testlen + TINY) / (reflen + SMALL)
    if ratio < 1:
        scores = [s * math.exp(1 - 1 / ratio) for s in scores]
    return scores


def bleu(candidates, refs, n=ORDER):
    """Corpus-level BLEU-1..n over pre-tokenized captions, and the
    per-image scores, with closest-reference brevity penalty."""
    correct, guess = [0] * n, [0] * n
    testlen, reflen = 0, 0
    per_image = {}
    for image_id, candidate, references in align(candidates, refs):
        stats = bleu_stats(candidate, references, n)
        testlen += stats["testlen"]
        reflen += stats["reflen"]
        for k in range(n):
            correct[k] += stats["correct"][k]
            guess[k] += stats["guess"][k]
        per_image[image_id] = combine(
            stats["correct"], stats["guess"], stats["testlen"], stats["reflen"], n
        )
    return combine(correct, guess, testlen, reflen, n), per_image


def bleu4(candidates, refs):
    scores, _ = bleu(candidates, refs, ORDER)
    return scores[3]
