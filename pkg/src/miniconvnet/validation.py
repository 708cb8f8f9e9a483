"""Input validation helpers for the estimator API."""
from __future__ import annotations

import numpy as np
from sklearn.utils.multiclass import type_of_target

from .exceptions import InputError, ShapeError
from .tensor import DTYPE


def check_images(X, input_shape=None) -> np.ndarray:
    """Coerce ``X`` to a float32 ``[n, h, w, c]`` batch.

    A rank-3 ``[n, h, w]`` array gains a trailing channel axis. Values must be
    finite.
    """
    X = np.asarray(X)
    if X.dtype == object:
        raise InputError("image batch must be numeric")
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4:
        raise ShapeError(f"expected images shaped [n, h, w, c] or [n, h, w], got {X.shape}")
    if X.shape[0] == 0:
        raise InputError("empty image batch")
    X = np.ascontiguousarray(X, dtype=DTYPE)
    if not np.isfinite(X).all():
        raise InputError("images contain NaN or infinite values")
    if input_shape is not None and tuple(X.shape[1:]) != tuple(input_shape):
        raise ShapeError(f"images have shape {X.shape[1:]}, estimator was fit on {tuple(input_shape)}")
    return X


def check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"labels must be 1-d, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise InputError(f"{n_samples} images but {y.shape[0]} labels")
    if type_of_target(y) not in ("binary", "multiclass"):
        raise InputError(f"labels must be class labels, got {type_of_target(y)!r} target")
    return y
