import json
import yaml
import hashlib
import numpy as np
from normality import slugify


def load_yaml(file_path):
    """Safely parse a YAML document."""
    with open(file_path, "r") as fh:
        return yaml.load(fh, Loader=yaml.SafeLoader)


def joinslug(*parts, prefix=None, sep="-"):
    parts = [slugify(p, sep=sep) for p in parts]
    parts = [p for p in parts if p is not None]
    if prefix is not None:
        parts = [slugify(prefix, sep=sep), *parts]
    if len(parts) < 1:
        return None
    return sep.join(parts)


def fingerprint(*parts):
    """Stable short digest of a JSON-able description, used to tag encoders
    and everything derived from them."""
    data = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha1(data.encode("utf-8")).hexdigest()


def split_seed(seed, *names):
    """Derive independent integer seeds for named components from one root
    seed. The same (seed, name) pair always yields the same value."""
    seeds = {}
    for name in names:
        digest = hashlib.sha1(f"{seed}:{name}".encode("utf-8")).digest()
        entropy = int.from_bytes(digest[:8], "little")
        seeds[name] = int(np.random.SeedSequence(entropy).generate_state(1)[0])
    return seeds
