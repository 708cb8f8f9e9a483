"""Image decoding, dataset loading and keypoint-based hand cropping.

Datasets are laid out one directory per class::

    root/a/0001.ppm
    root/b/...

Class indices follow the ascending sort of directory names, so ``a`` is 0
and ``j`` is 9. Images are binary PPM (P6, maxval 255).
"""
from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import CropError, DatasetError, FormatError
from .parallel import worker_count
from .tensor import DTYPE

log = logging.getLogger(__name__)

_PPM_HEADER = re.compile(rb"P6(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def decode_ppm(data: bytes) -> np.ndarray:
    """Decode a binary P6 PPM into an ``[h, w, 3]`` tensor of raw 0-255 values."""
    if data[:2] != b"P6":
        raise FormatError(f"not a binary PPM (magic {data[:2]!r})")
    m = _PPM_HEADER.match(data)
    if m is None:
        raise FormatError("malformed PPM header")
    width, height, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    if width < 1 or height < 1:
        raise FormatError(f"invalid dimensions {width}x{height}")
    n = width * height * 3
    payload = data[m.end() : m.end() + n]
    if len(payload) != n:
        raise FormatError(f"truncated payload: expected {n} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).astype(DTYPE)


def encode_ppm(image: np.ndarray) -> bytes:
    """Encode an ``[h, w, 3]`` (or ``[h, w, 1]``) image of 0-255 values as P6."""
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise FormatError(f"cannot encode image of shape {image.shape}")
    if image.shape[2] == 1:
        image = np.repeat(image, 3, axis=2)
    h, w = image.shape[:2]
    pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8)
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def normalize(image: np.ndarray) -> np.ndarray:
    return (image / np.float32(255.0)).astype(DTYPE)


def resize(image: np.ndarray, target_h: int, target_w: int, method: str = "nearest") -> np.ndarray:
    """Resample an ``[h, w, c]`` image.

    ``nearest`` maps each destination index to ``floor(dst * src / dst_size)``;
    ``bilinear`` uses half-pixel centers with edge clamping.
    """
    if target_h < 1 or target_w < 1:
        raise ValueError("resize targets must be positive")
    h, w = image.shape[:2]
    if (h, w) == (target_h, target_w):
        return image.copy()
    if method == "nearest":
        rows = (np.arange(target_h) * h) // target_h
        cols = (np.arange(target_w) * w) // target_w
        return image[rows][:, cols]
    if method != "bilinear":
        raise ValueError(f"unknown resize method {method!r}")
    sr = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0, h - 1)
    sc = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0, w - 1)
    r0, c0 = np.floor(sr).astype(int), np.floor(sc).astype(int)
    r1, c1 = np.minimum(r0 + 1, h - 1), np.minimum(c0 + 1, w - 1)
    fr, fc = (sr - r0)[:, None, None], (sc - c0)[None, :, None]
    img = image.astype(np.float64)
    top = img[r0][:, c0] * (1 - fc) + img[r0][:, c1] * fc
    bottom = img[r1][:, c0] * (1 - fc) + img[r1][:, c1] * fc
    return (top * (1 - fr) + bottom * fr).astype(image.dtype)


def to_channels(image: np.ndarray, channels: int) -> np.ndarray:
    c = image.shape[2]
    if c == channels:
        return image
    if channels == 1:
        return image.mean(axis=2, keepdims=True, dtype=np.float64).astype(image.dtype)
    if c == 1:
        return np.repeat(image, channels, axis=2)
    raise FormatError(f"cannot convert {c} channels to {channels}")


def prepare_image(raw: np.ndarray, input_shape: Sequence[int] | None, method: str = "nearest") -> np.ndarray:
    """Normalize a raw 0-255 image and fit it to ``input_shape``."""
    image = normalize(raw)
    if input_shape is None:
        return image
    h, w, c = input_shape
    return np.ascontiguousarray(to_channels(resize(image, h, w, method), c))


def load_image(path, input_shape=None, method: str = "nearest") -> np.ndarray:
    return prepare_image(decode_ppm(Path(path).read_bytes()), input_shape, method)


@dataclass
class Sample:
    image: np.ndarray
    label: int
    source_path: str = ""


@dataclass
class Dataset:
    samples: list[Sample]
    class_names: list[str]
    errors: list[tuple[str, str]] = field(default_factory=list)

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def images(self) -> np.ndarray:
        return np.stack([s.image for s in self.samples])

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.class_names))

    @classmethod
    def from_arrays(cls, images, labels, class_names=None) -> "Dataset":
        labels = np.asarray(labels, dtype=np.int64)
        if class_names is None:
            class_names = [str(k) for k in range(int(labels.max()) + 1)]
        samples = [Sample(np.ascontiguousarray(img, dtype=DTYPE), int(y)) for img, y in zip(images, labels)]
        return cls(samples, list(class_names))

    def error_report(self) -> str:
        """Failed files as ``<path>\\t<reason>`` lines."""
        return "".join(f"{path}\t{reason}\n" for path, reason in self.errors)


def load_dataset(root, input_shape=(32, 32, 1), method: str = "nearest", workers: int | None = None) -> Dataset:
    """Load ``root/<class>/<image>.ppm`` into memory in sorted, deterministic order.

    Files that fail to decode are recorded in ``Dataset.errors`` and skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not class_names:
        raise DatasetError(f"no class directories under {root}")
    jobs = []
    for label, name in enumerate(class_names):
        for path in sorted((root / name).iterdir()):
            if path.is_file() and not path.name.startswith("."):
                jobs.append((path, label))
    if not jobs:
        raise DatasetError(f"no image files under {root}")

    def _load(job):
        path, label = job
        try:
            return Sample(load_image(path, input_shape, method), label, str(path)), None
        except (FormatError, OSError) as exc:
            return None, (str(path), str(exc))

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        results = list(pool.map(_load, jobs))
    samples = [s for s, _ in results if s is not None]
    errors = [e for _, e in results if e is not None]
    for path, reason in errors:
        log.warning("skipping %s: %s", path, reason)
    if not samples:
        raise DatasetError(f"no decodable images under {root}")
    return Dataset(samples, class_names, errors)


@dataclass
class KeypointSet:
    points: np.ndarray  # [n, 2] of (x, y) pixel coordinates
    image_width: int
    image_height: int
    confidence: np.ndarray | None = None


def read_keypoints_json(data: bytes | str) -> KeypointSet:
    """Parse ``{"image_width", "image_height", "points": [{"x", "y", "confidence"?}]}``."""
    try:
        obj = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed keypoint JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FormatError("keypoint JSON must be an object")
    missing = [k for k in ("image_width", "image_height", "points") if k not in obj]
    if missing:
        raise FormatError(f"keypoint JSON is missing {missing}")
    points = obj["points"]
    if not isinstance(points, list) or not points:
        raise FormatError("keypoint JSON needs a non-empty points array")
    try:
        xy = np.array([[float(p["x"]), float(p["y"])] for p in points])
        conf = [p.get("confidence") for p in points]
        width, height = int(obj["image_width"]), int(obj["image_height"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad keypoint entry: {exc}") from None
    if not np.isfinite(xy).all():
        raise FormatError("keypoint coordinates must be finite")
    confidence = None if any(c is None for c in conf) else np.array(conf, dtype=np.float64)
    return KeypointSet(xy, width, height, confidence)


def read_keypoints_file(path) -> KeypointSet:
    return read_keypoints_json(Path(path).read_bytes())


def crop_box(kps: KeypointSet, image_h: int, image_w: int, margin_frac: float = 0.25) -> tuple[int, int, int, int]:
    """Square box around the keypoints as ``(x0, y0, x1, y1)``, end-exclusive.

    Coordinates are continuous: pixel ``i`` spans ``[i, i + 1)``. The hull is
    grown by ``margin_frac`` of its larger side on each edge, squared about its
    center, then clamped to the image.
    """
    if margin_frac < 0:
        raise ValueError("margin_frac must be >= 0")
    (x0, y0), (x1, y1) = kps.points.min(axis=0), kps.points.max(axis=0)
    side = max(x1 - x0, y1 - y0)
    side += 2 * margin_frac * side
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    left = max(math.floor(cx - side / 2), 0)
    top = max(math.floor(cy - side / 2), 0)
    right = min(math.ceil(cx + side / 2), image_w)
    bottom = min(math.ceil(cy + side / 2), image_h)
    if right <= left or bottom <= top:
        raise CropError(f"degenerate crop box ({left}, {top}, {right}, {bottom})")
    return left, top, right, bottom


def crop_from_keypoints(image: np.ndarray, kps: KeypointSet, margin_frac: float = 0.25,
                        output_shape: Sequence[int] | None = None, method: str = "nearest") -> np.ndarray:
    """Crop the hand region and, when ``output_shape`` is given, fit it to that shape."""
    x0, y0, x1, y1 = crop_box(kps, image.shape[0], image.shape[1], margin_frac)
    crop = image[y0:y1, x0:x1]
    if output_shape is None:
        return crop.copy()
    h, w = output_shape[:2]
    out = resize(crop, h, w, method)
    if len(output_shape) == 3:
        out = to_channels(out, output_shape[2])
    return np.ascontiguousarray(out)
