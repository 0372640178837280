from banal import is_mapping

from captiongan.exc import InputError


class ReferenceSet(dict):
    """Image id to the list of reference captions for that image."""

    def __init__(self, data=None):
        super().__init__()
        if data is not None and not is_mapping(data):
            raise InputError("References must be a mapping of image ids")
        for image_id, captions in (data or {}).items():
            if isinstance(captions, str):
                captions = [captions]
            captions = list(captions or [])
            if not len(captions):
                raise InputError("Image has no reference captions", image_id=image_id)
            self[image_id] = captions


def align(candidates, refs):
    """Pair every candidate with its references, ordered by image id. A
    candidate without references is an input error."""
    if not len(candidates):
        raise InputError("No candidate captions")
    pairs = []
    for image_id in sorted(candidates, key=str):
        if image_id not in refs:
            raise InputError("Candidate has no references", image_id=image_id)
        captions = refs[image_id]
        if not len(captions):
            raise InputError("Image has no reference captions", image_id=image_id)
        pairs.append((image_id, candidates[image_id], list(captions)))
    return pairs
