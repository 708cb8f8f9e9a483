"""Binary weight files (``.mcw``).

Layout, little-endian throughout::

    magic      8 bytes  b"MCNWGT01"
    count      u32
    entries    count x (name_len u32, name utf-8, rank u32, extents u32 * rank,
                        payload float32 * prod(extents), row-major)

Entry names are ``<layer>/<param>``, e.g. ``block5_conv1/kernel``.
"""
from __future__ import annotations

import io
import os
import struct
from typing import BinaryIO

import numpy as np

from .exceptions import FormatError, ShapeError
from .model import Model

MAGIC = b"MCNWGT01"
_U32 = struct.Struct("<I")


def write_entries(entries: dict[str, np.ndarray], sink: BinaryIO) -> None:
    sink.write(MAGIC)
    sink.write(_U32.pack(len(entries)))
    for name, array in entries.items():
        raw = name.encode("utf-8")
        sink.write(_U32.pack(len(raw)))
        sink.write(raw)
        sink.write(_U32.pack(array.ndim))
        sink.write(struct.pack(f"<{array.ndim}I", *array.shape))
        sink.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if len(data) != n:
        raise FormatError(f"truncated weight file while reading {what}")
    return data


def read_entries(source: BinaryIO) -> dict[str, np.ndarray]:
    if _read_exact(source, 8, "magic") != MAGIC:
        raise FormatError("bad magic; not a weight file")
    (count,) = _U32.unpack(_read_exact(source, 4, "entry count"))
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = _U32.unpack(_read_exact(source, 4, "name length"))
        try:
            name = _read_exact(source, name_len, "name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"entry name is not UTF-8: {exc}") from None
        if name in entries:
            raise FormatError(f"duplicate entry {name!r}")
        (rank,) = _U32.unpack(_read_exact(source, 4, "rank"))
        shape = struct.unpack(f"<{rank}I", _read_exact(source, 4 * rank, "extents"))
        numel = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = _read_exact(source, 4 * numel, f"payload of {name}")
        entries[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    return entries


def _open(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode)
    return None


def save_weights(model: Model, sink) -> None:
    """Write every parameter of ``model`` to a path or binary file object."""
    entries = model.get_weights()
    fh = _open(sink, "wb")
    if fh is None:
        write_entries(entries, sink)
        return
    with fh:
        write_entries(entries, fh)


def load_weights(model: Model, source, strict: bool = True) -> list[str]:
    """Load parameters into ``model`` in place and return the skipped names.

    With ``strict`` every model parameter must be present with the exact shape
    and the file may hold nothing else. Otherwise entries whose name and shape
    both match are loaded; every other model parameter or file entry is
    reported as skipped (model parameters keep their current values).
    """
    fh = _open(source, "rb")
    if fh is None:
        entries = read_entries(source)
    else:
        with fh:
            entries = read_entries(fh)
    targets = {full: (layer, key) for full, layer, key in model.named_parameters()}
    skipped, plan = [], []
    for full, (layer, key) in targets.items():
        current = layer.params[key]
        value = entries.get(full)
        if value is None or value.shape != current.shape:
            if strict:
                got = "missing" if value is None else value.shape
                raise ShapeError(f"{full}: expected {current.shape}, file has {got}")
            skipped.append(full)
        else:
            plan.append((layer, key, value))
    extra = sorted(set(entries) - set(targets))
    if extra and strict:
        raise ShapeError(f"file holds entries the model lacks: {extra}")
    for layer, key, value in plan:
        layer.params[key] = value.astype(layer.params[key].dtype, copy=True)
    return skipped + extra


def weight_file_size(entries: dict[str, np.ndarray]) -> int:
    return 12 + sum(4 + len(n.encode("utf-8")) + 4 + 4 * a.ndim + 4 * a.size for n, a in entries.items())


def weights_to_bytes(model: Model) -> bytes:
    buf = io.BytesIO()
    save_weights(model, buf)
    return buf.getvalue()
