"""File helpers: atomic writes, CSV matrices with JSON sidecars, JSON/JSONL."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable

import numpy as np

FLOAT_FMT = "%.17g"


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def write_json(path, obj: Any) -> None:
    atomic_write_text(path, dumps_json(obj))


def read_json(path) -> Any:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_jsonl(path, records: Iterable[dict]) -> None:
    lines = [json.dumps(r, sort_keys=True, default=_json_default) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def matrix_to_csv(a: np.ndarray) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return "".join(",".join(FLOAT_FMT % v for v in row) + "\n" for row in a)


def write_matrix(path, a: np.ndarray, role: str = "matrix") -> None:
    """Write ``a`` as headerless CSV plus a ``<path>.json`` sidecar.

    A 1-D array is stored as a single row.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("refusing to serialize non-finite entries")
    a2 = np.atleast_2d(a)
    atomic_write_text(path, matrix_to_csv(a2))
    write_json(str(path) + ".json", {"rows": int(a2.shape[0]), "cols": int(a2.shape[1]), "role": role})


def read_matrix(path) -> np.ndarray:
    """Inverse of :func:`write_matrix`; shape comes from the sidecar when present."""
    sidecar = Path(str(path) + ".json")
    shape = None
    if sidecar.exists():
        meta = read_json(sidecar)
        shape = (meta["rows"], meta["cols"])
    text = Path(path).read_text(encoding="utf-8")
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        return np.zeros(shape if shape else (0, 0))
    a = np.array([[float(v) for v in line.split(",")] for line in rows])
    if shape is not None and a.shape != shape:
        raise ValueError(f"{path}: sidecar says {shape}, file holds {a.shape}")
    return a
