from nltk.tokenize import TreebankWordTokenizer

# Tokens the COCO caption tools strip after PTB tokenization, plus the raw
# brackets, which the Java tokenizer would have rewritten to -LRB- etc.
PUNCTUATION = {
    "''",
    "'",
    "``",
    "`",
    "-LRB-",
    "-RRB-",
    "-LCB-",
    "-RCB-",
    "(",
    ")",
    "{",
    "}",
    "[",
    "]",
    ".",
    "?",
    "!",
    ",",
    ":",
    "-",
    "--",
    "...",
    ";",
}

_tokenizer = TreebankWordTokenizer()


def tokenize(text):
    """Lowercased PTB-style tokens with punctuation removed."""
    text = " ".join(str(text).lower().split())
    return [t for t in _tokenizer.tokenize(text) if t not in PUNCTUATION]


def normalize_caption(text):
    """The space-joined token string the metrics operate on."""
    return " ".join(tokenize(text))


def normalize_all(captions):
    """Normalize a map of image id to a caption or a list of captions."""
    out = {}
    for key, value in captions.items():
        if isinstance(value, str):
            out[key] = normalize_caption(value)
        else:
            out[key] = [normalize_caption(v) for v in value]
    return out
