"""Image augmentation: horizontal flip, integer shifts and rotation.

All transforms take and return ``[h, w, c]`` tensors and never modify their
input. :func:`random_augment` draws its parameters from a caller-supplied
Generator, so the output is a pure function of (image, config, stream state).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ShapeError

INTERPOLATIONS = ("nearest", "bilinear")


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    max_shift_frac: tuple[float, float] = (0.1, 0.1)  # (horizontal, vertical)
    max_rotate_deg: float = 15.0
    fill_value: float = 0.0
    interpolation: str = "nearest"

    def __post_init__(self):
        if np.isscalar(self.max_shift_frac):
            self.max_shift_frac = (float(self.max_shift_frac), float(self.max_shift_frac))
        self.max_shift_frac = tuple(float(v) for v in self.max_shift_frac)
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if len(self.max_shift_frac) != 2 or not all(0.0 <= v < 1.0 for v in self.max_shift_frac):
            raise ValueError(f"max_shift_frac must be two values in [0, 1), got {self.max_shift_frac}")
        if self.max_rotate_deg < 0:
            raise ValueError("max_rotate_deg must be >= 0")
        if self.interpolation not in INTERPOLATIONS:
            raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")

    @classmethod
    def disabled(cls) -> "AugmentConfig":
        return cls(flip_prob=0.0, max_shift_frac=(0.0, 0.0), max_rotate_deg=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_shift_frac"] = list(self.max_shift_frac)
        return d


def _check_image(image):
    if image.ndim != 3:
        raise ShapeError(f"expected an [h, w, c] image, got shape {image.shape}")


def hflip(image: np.ndarray) -> np.ndarray:
    _check_image(image)
    return image[:, ::-1, :].copy()


def shift(image: np.ndarray, dx: int, dy: int, fill: float = 0.0) -> np.ndarray:
    """Translate content right by ``dx`` and down by ``dy`` pixels."""
    _check_image(image)
    h, w = image.shape[:2]
    out = np.full_like(image, fill)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_y, dst_y = slice(max(-dy, 0), h - max(dy, 0)), slice(max(dy, 0), h - max(-dy, 0))
    src_x, dst_x = slice(max(-dx, 0), w - max(dx, 0)), slice(max(dx, 0), w - max(-dx, 0))
    out[dst_y, dst_x] = image[src_y, src_x]
    return out


def _cos_sin(degrees: float) -> tuple[float, float]:
    quarter = degrees / 90.0
    if quarter == round(quarter):
        k = int(round(quarter)) % 4
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[k]
    rad = math.radians(degrees)
    return math.cos(rad), math.sin(rad)


def rotate(image: np.ndarray, degrees: float, interpolation: str = "nearest", fill: float = 0.0) -> np.ndarray:
    """Rotate counter-clockwise about the image center, keeping the extents.

    Output pixels whose source falls outside the image take ``fill``.
    """
    _check_image(image)
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"interpolation must be one of {INTERPOLATIONS}")
    if degrees % 360 == 0:
        return image.copy()
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    cos, sin = _cos_sin(degrees)
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    x, y = cols - cx, cy - rows  # y axis points up
    src_c = cos * x + sin * y + cx
    src_r = cy - (-sin * x + cos * y)
    if interpolation == "nearest":
        r = np.floor(src_r + 0.5).astype(np.intp)
        c = np.floor(src_c + 0.5).astype(np.intp)
        inside = (r >= 0) & (r < h) & (c >= 0) & (c < w)
        out = np.full_like(image, fill)
        out[inside] = image[r[inside], c[inside]]
        return out
    return _bilinear(image, src_r, src_c, fill)


def _bilinear(image, src_r, src_c, fill):
    h, w = image.shape[:2]
    r0, c0 = np.floor(src_r).astype(np.intp), np.floor(src_c).astype(np.intp)
    fr, fc = (src_r - r0)[..., None], (src_c - c0)[..., None]
    out = np.zeros(image.shape, dtype=np.float64)
    for dr, dc, weight in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                           (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        inside = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
        tap = np.full(image.shape, fill, dtype=np.float64)
        tap[inside] = image[rr[inside], cc[inside]]
        out += weight * tap
    return out.astype(image.dtype)


def draw_params(image_shape, config: AugmentConfig, rng: np.random.Generator) -> tuple[bool, int, int, float]:
    """Draw ``(flip, dx, dy, angle)``; always consumes the same number of draws."""
    h, w = image_shape[:2]
    max_dx = int(math.floor(config.max_shift_frac[0] * w))
    max_dy = int(math.floor(config.max_shift_frac[1] * h))
    flip = bool(rng.random() < config.flip_prob)
    dx = int(rng.integers(-max_dx, max_dx + 1))
    dy = int(rng.integers(-max_dy, max_dy + 1))
    angle = float(rng.uniform(-config.max_rotate_deg, config.max_rotate_deg))
    return flip, dx, dy, angle


def random_augment(image: np.ndarray, config: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Apply flip, then shift, then rotate with randomly drawn parameters."""
    _check_image(image)
    flip, dx, dy, angle = draw_params(image.shape, config, rng)
    out = hflip(image) if flip else image
    if dx or dy:
        out = shift(out, dx, dy, config.fill_value)
    if angle:
        out = rotate(out, angle, config.interpolation, config.fill_value)
    return out if out is not image else image.copy()
