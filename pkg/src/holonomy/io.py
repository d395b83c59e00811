"""JSON encodings shared by the library and the CLI.

Complex matrices are written as row-major flat lists of ``[re, im]`` pairs.
Readers also accept a nested list of rows of pairs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ContractError

__all__ = ["matrix_to_json", "matrix_from_json", "fmt_float", "load_json", "dump_json"]


def matrix_to_json(a) -> list[list[float]]:
    a = np.asarray(a, dtype=complex)
    return [[float(z.real), float(z.imag)] for z in a.reshape(-1)]


def matrix_from_json(data, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.shape[-1] != 2:
        raise ContractError("complex entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    if z.size != int(np.prod(shape)):
        raise ContractError(f"matrix has {z.size} entries, expected shape {shape}")
    return z.reshape(shape)


def fmt_float(x) -> str:
    """17 significant digits, enough for an exact float round-trip."""
    if x is None:
        return ""
    return format(float(x), ".17g")


def load_json(path) -> dict:
    with open(Path(path), encoding="utf-8") as fh:
        return json.load(fh)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
