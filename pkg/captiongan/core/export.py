import os
import csv
import json
import tempfile
import numpy as np
from pathlib import Path
from datetime import date, datetime
from dataclasses import is_dataclass, asdict


class JSONEncoder(json.JSONEncoder):
    """This encoder will serialize all objects that have a to_dict
    method by calling that method and serializing the result."""

    def default(self, obj):
        if isinstance(obj, (datetime, date)):
            return obj.isoformat()
        if isinstance(obj, bytes):
            return obj.decode("utf-8")
        if isinstance(obj, set):
            return [o for o in sorted(obj)]
        if isinstance(obj, Path):
            return obj.as_posix()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.generic):
            return obj.item()
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        if is_dataclass(obj):
            return asdict(obj)
        return json.JSONEncoder.default(self, obj)


def write_json(data, fh):
    """Write a JSON object to the given open file handle."""
    json.dump(data, fh, sort_keys=True, indent=2, cls=JSONEncoder)


def write_object(stream, obj, indent=None):
    """Write an object for line-based JSON format."""
    data = json.dumps(obj, sort_keys=True, indent=indent, cls=JSONEncoder)
    stream.write(data + "\n")


def read_objects(path):
    """Iterate over the objects of a line-based JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if len(line):
                yield json.loads(line)


def write_csv(path, rows, columns=None):
    """Write flat dictionaries as a CSV table. Columns default to the sorted
    union of all row keys."""
    if columns is None:
        columns = sorted(set(key for row in rows for key in row.keys()))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, dialect=csv.unix_dialect)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c) for c in columns])
    return columns


def flatten_row(nested, prefix=None):
    """Flatten nested mappings into dotted keys for CSV output."""
    for key, value in nested.items():
        key = key if prefix is None else f"{prefix}.{key}"
        if isinstance(value, dict):
            yield from flatten_row(value, prefix=key)
        else:
            yield (key, value)


def atomic_write(path, write):
    """Create ``path`` by writing a temporary file in the same directory and
    renaming it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
