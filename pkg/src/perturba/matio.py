"""JSON file formats shared across the toolkit.

Matrix files: ``{"rows": n, "cols": m, "data": [[re, im], ...]}`` with the
entries row-major.  Writers emit 17 significant digits so round-trips are
exact; readers accept any valid JSON numbers.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError("non-finite value cannot be serialized")
    return format(float(x), ".17g")


def dumps(obj) -> str:
    """Serialize dicts/lists/scalars to JSON with 17-significant-digit floats."""
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if obj is None:
        return "null"
    raise ValidationError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc


def matrix_to_obj(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2:
        raise ValidationError("matrix must be two-dimensional")
    rows, cols = a.shape
    data = [[float(z.real), float(z.imag)] for z in a.reshape(-1)]
    return {"rows": rows, "cols": cols, "data": data}


def obj_to_matrix(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix object: {exc}") from exc
    if rows < 1 or cols < 1:
        raise ValidationError("matrix must have rows, cols >= 1")
    if len(data) != rows * cols:
        raise ValidationError("matrix data length does not match rows*cols")
    flat = np.array([complex(re, im) for re, im in data], dtype=complex)
    if not np.all(np.isfinite(flat.real)) or not np.all(np.isfinite(flat.imag)):
        raise ValidationError("matrix entries must be finite")
    return flat.reshape(rows, cols)


def save_matrix(path, a: np.ndarray) -> None:
    write_json(path, matrix_to_obj(a))


def load_matrix(path) -> np.ndarray:
    return obj_to_matrix(read_json(path))
