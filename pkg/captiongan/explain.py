import torch
import structlog
from typing import List, Optional, Tuple
from dataclasses import dataclass

from captiongan.exc import InputError

log = structlog.get_logger(__name__)

# Prefix for word-internal sub-word pieces.
CONTINUATION_MARKER = "##"


@dataclass
class PromptExplanation:
    """Nearest vocabulary token of every visual prompt vector."""

    entries: List[Tuple[int, str, float]]
    image_id: Optional[str] = None

    def __post_init__(self):
        for _, _, score in self.entries:
            if not -1.0 <= score <= 1.0:
                raise InputError("Cosine score outside [-1, 1]", score=score)

    @property
    def tokens(self):
        return [token for _, token, _ in self.entries]

    def to_dict(self):
        return {
            "image_id": self.image_id,
            "prompts": [
                {"index": idx, "token": token, "score": score}
                for idx, token, score in self.entries
            ],
        }


def nearest_tokens(prompts, table):
    """For each row of ``prompts`` (k, d2), the id and cosine of the most
    similar row of ``table`` (V, d2). Zero vectors have cosine 0 to
    everything; ties go to the lowest token id."""
    prompts = torch.as_tensor(prompts).detach().double()
    table = torch.as_tensor(table).detach().double()
    if prompts.ndim != 2 or table.ndim != 2 or prompts.shape[1] != table.shape[1]:
        raise InputError(
            "Prompt width does not match the token embedding table",
            prompts=list(prompts.shape),
            table=list(table.shape),
        )
    p_norm = prompts.norm(dim=1, keepdim=True)
    t_norm = table.norm(dim=1, keepdim=True)
    p_unit = torch.where(p_norm > 0, prompts / p_norm.clamp_min(1e-300), prompts)
    t_unit = torch.where(t_norm > 0, table / t_norm.clamp_min(1e-300), table)
    scores = (p_unit @ t_unit.t()).clamp(-1.0, 1.0)
    best = scores.max(dim=1).values
    results = []
    for row in range(scores.shape[0]):
        # First index attaining the maximum.
        idx = int(torch.nonzero(scores[row] == best[row])[0, 0])
        results.append((idx, float(scores[row, idx])))
    return results


def explain_prompts(prompts, token_embedding_table, tokenizer=None):
    """Label each visual prompt with the closest token of the decoder's
    static input-embedding table."""
    matrix = prompts.matrix
    entries = []
    for index, (token_id, score) in enumerate(
        nearest_tokens(matrix, token_embedding_table)
    ):
        token = str(token_id)
        if tokenizer is not None:
            token, continuation = tokenizer.token_string(token_id)
            if continuation:
                token = CONTINUATION_MARKER + token
        entries.append((index, token, score))
    log.debug("Explained prompts", image_id=prompts.image_id, k=len(entries))
    return PromptExplanation(entries, image_id=prompts.image_id)
