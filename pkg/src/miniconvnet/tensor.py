"""Dense tensor primitives.

Tensors are plain C-contiguous (row-major) NumPy arrays. Storage is float32;
``float64`` arrays flow through every operation unchanged, which is how the
gradient checks run in 64-bit mode.

Image tensors are laid out ``[height, width, channels]`` and batches
``[batch, height, width, channels]``.
"""
from __future__ import annotations

import math
import operator
from typing import Sequence

import numpy as np

from .exceptions import ShapeError, SizeError

DTYPE = np.float32

_MAX_ELEMENTS = np.iinfo(np.intp).max

_OPS = {"add": operator.add, "sub": operator.sub, "mul": operator.mul}


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(shape)
    if not dims:
        raise ShapeError("shape must have at least one dimension")
    for d in dims:
        if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
            raise ShapeError(f"extent {d!r} is not an integer")
        if d < 1:
            raise ShapeError(f"extent {d} must be >= 1")
    if math.prod(int(d) for d in dims) > _MAX_ELEMENTS:
        raise SizeError(f"element count of shape {dims} overflows")
    return tuple(int(d) for d in dims)


def tensor_create(shape: Sequence[int], fill: float = 0.0, dtype=DTYPE) -> np.ndarray:
    """Return a new tensor of ``shape`` with every element equal to ``fill``."""
    return np.full(check_shape(shape), fill, dtype=dtype)


def as_tensor(values, dtype=DTYPE) -> np.ndarray:
    return np.ascontiguousarray(values, dtype=dtype)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of rank-2 tensors ``[m, k] x [k, n] -> [m, n]``."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Apply ``add``, ``sub`` or ``mul`` elementwise; shapes must match exactly."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown op {op!r}; expected one of {sorted(_OPS)}") from None
    return fn(a, b)


def flat_index(shape: Sequence[int], index: Sequence[int]) -> int:
    """Row-major flat offset of ``index`` within ``shape``."""
    return int(np.ravel_multi_index(tuple(index), tuple(shape)))
