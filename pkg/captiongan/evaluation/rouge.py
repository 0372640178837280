from captiongan.evaluation.types import align

BETA = 1.2


def lcs_length(a, b):
    if len(a) < len(b):
        a, b = b, a
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[len(b)]


def rouge_l_score(candidate, references, beta=BETA):
    """LCS F-measure from the best precision and the best recall over
    the references, taken independently."""
    tokens = candidate.split(" ")
    precisions, recalls = [], []
    for ref in references:
        ref_tokens = ref.split(" ")
        lcs = lcs_length(ref_tokens, tokens)
        precisions.append(lcs / len(tokens))
        recalls.append(lcs / len(ref_tokens))
    prec, rec = max(precisions), max(recalls)
    if prec == 0 or rec == 0:
        return 0.0
    return ((1 + beta ** 2) * prec * rec) / (rec + beta ** 2 * prec)


def rouge_l(candidates, refs):
    score, _ = rouge_l_scores(candidates, refs)
    return score


def rouge_l_scores(candidates, refs):
    per_image = {}
    for image_id, candidate, references in align(candidates, refs):
        per_image[image_id] = rouge_l_score(candidate, references)
    return sum(per_image.values()) / len(per_image), per_image
