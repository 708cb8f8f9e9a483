"""Procedurally drawn glyph corpus for desk-scale training runs.

Ten glyph classes named ``a``..``j`` are rendered from distance fields with
random placement, scale, stroke width, intensity and pixel noise. No class
is the mirror image of another, so horizontal-flip augmentation is label
preserving.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Dataset, Sample, encode_ppm
from .tensor import DTYPE

CLASS_NAMES = list("abcdefghij")


def _segment_dist(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy), 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def _polyline(px, py, pts, closed=False):
    pts = list(pts) + ([pts[0]] if closed else [])
    return np.min([_segment_dist(px, py, *a, *b) for a, b in zip(pts, pts[1:])], axis=0)


def _glyph_distance(k: int, px, py):
    """Distance from each pixel to glyph ``k`` drawn in unit coordinates [-1, 1]."""
    if k == 0:  # ring
        return np.abs(np.hypot(px, py) - 0.8)
    if k == 1:  # square outline
        return _polyline(px, py, [(-0.75, -0.75), (0.75, -0.75), (0.75, 0.75), (-0.75, 0.75)], closed=True)
    if k == 2:  # triangle outline
        return _polyline(px, py, [(0.0, -0.85), (0.85, 0.7), (-0.85, 0.7)], closed=True)
    if k == 3:  # plus
        return np.minimum(_segment_dist(px, py, -0.85, 0, 0.85, 0), _segment_dist(px, py, 0, -0.85, 0, 0.85))
    if k == 4:  # x
        return np.minimum(_segment_dist(px, py, -0.7, -0.7, 0.7, 0.7), _segment_dist(px, py, -0.7, 0.7, 0.7, -0.7))
    if k == 5:  # two horizontal bars
        return np.minimum(_segment_dist(px, py, -0.8, -0.4, 0.8, -0.4), _segment_dist(px, py, -0.8, 0.4, 0.8, 0.4))
    if k == 6:  # single vertical bar
        return _segment_dist(px, py, 0, -0.9, 0, 0.9)
    if k == 7:  # filled disk
        return np.maximum(np.hypot(px, py) - 0.55, 0.0)
    if k == 8:  # diamond outline
        return _polyline(px, py, [(0, -0.9), (0.9, 0), (0, 0.9), (-0.9, 0)], closed=True)
    if k == 9:  # L shape
        return _polyline(px, py, [(-0.5, -0.85), (-0.5, 0.75), (0.6, 0.75)])
    raise ValueError(f"no glyph {k}")


def render_glyph(k: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """One ``[size, size, 1]`` image in [0, 1] of glyph class ``k``."""
    scale = rng.uniform(0.32, 0.42) * size
    cx = (size - 1) / 2 + rng.uniform(-0.08, 0.08) * size
    cy = (size - 1) / 2 + rng.uniform(-0.08, 0.08) * size
    half_width = rng.uniform(0.9, 1.6)
    intensity = rng.uniform(0.7, 1.0)
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    d = _glyph_distance(k, (cols - cx) / scale, (rows - cy) / scale) * scale
    img = intensity * np.clip(half_width + 0.5 - d, 0.0, 1.0)
    img += rng.normal(0.0, 0.05, img.shape)
    return np.clip(img, 0.0, 1.0).astype(DTYPE)[..., None]


def make_glyph_dataset(per_class: int, size: int = 32, seed: int = 0, classes: int = 10) -> Dataset:
    """Generate ``per_class`` samples of each glyph class, in class order."""
    samples = []
    for k in range(classes):
        rng = np.random.default_rng([seed, k])
        for i in range(per_class):
            samples.append(Sample(render_glyph(k, size, rng), k, f"synthetic:{CLASS_NAMES[k]}:{i}"))
    return Dataset(samples, CLASS_NAMES[:classes])


def write_glyph_corpus(root, per_class: int, size: int = 32, seed: int = 0, classes: int = 10) -> Dataset:
    """Write a generated corpus as ``root/<class>/<index>.ppm`` files."""
    dataset = make_glyph_dataset(per_class, size, seed, classes)
    root = Path(root)
    counters: dict[int, int] = {}
    for sample in dataset.samples:
        folder = root / dataset.class_names[sample.label]
        folder.mkdir(parents=True, exist_ok=True)
        n = counters[sample.label] = counters.get(sample.label, -1) + 1
        path = folder / f"{n:05d}.ppm"
        path.write_bytes(encode_ppm(sample.image * 255.0))
        sample.source_path = str(path)
    return dataset
