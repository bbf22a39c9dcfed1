"""Sample files and atomic report writing."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def read_sample(path) -> np.ndarray:
    """One value per line; blank lines and ``#`` comments are skipped.

    Raises ValueError if the file holds no values.
    """
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float.fromhex(line) if line.lower().startswith(("0x", "-0x")) else float(line))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from exc
    if not values:
        raise ValueError(f"{path}: no sample values")
    return np.array(values, dtype=np.float64)


def format_sample(values) -> str:
    # repr of a Python float round-trips exactly
    return "".join(f"{float(v)!r}\n" for v in np.asarray(values).reshape(-1))


def atomic_write(path, text: str) -> None:
    """Write `text` to `path` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_sample(path, values) -> None:
    atomic_write(path, format_sample(values))


def to_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "_asdict"):
        return o._asdict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> None:
    atomic_write(path, to_json(obj))
