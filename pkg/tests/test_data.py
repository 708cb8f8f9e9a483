import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from miniconvnet.data import (KeypointSet, crop_box, crop_from_keypoints, decode_ppm, encode_ppm, load_dataset,
                              normalize, read_keypoints_json, resize)
from miniconvnet.exceptions import CropError, DatasetError, FormatError


class TestPPM:
    def test_single_white_pixel(self):
        assert decode_ppm(b"P6 1 1 255 " + bytes([255, 255, 255])).tolist() == [[[255, 255, 255]]]

    def test_two_pixels(self):
        img = decode_ppm(b"P6\n2 1\n255\n" + bytes([0, 0, 0, 255, 0, 0]))
        assert img.shape == (1, 2, 3) and img.tolist() == [[[0, 0, 0], [255, 0, 0]]]

    def test_comment_in_header(self):
        assert decode_ppm(b"P6\n# made by hand\n1 1\n255\n" + bytes(3)).shape == (1, 1, 3)

    @pytest.mark.parametrize("data", [
        b"P3 1 1 255 255 255 255",
        b"P6 2 2 255 " + bytes(11),
        b"P6 1 1 65535 " + bytes(6),
        b"P6 1 1",
    ])
    def test_rejects(self, data):
        with pytest.raises(FormatError):
            decode_ppm(data)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
    def test_encode_decode_normalize_round_trip(self, pixels):
        decoded = decode_ppm(encode_ppm(pixels.astype(np.float32)))
        assert np.array_equal(decoded, pixels)
        assert np.array_equal(np.rint(normalize(decoded) * 255).astype(np.uint8), pixels)


def test_normalize_examples():
    assert normalize(np.array([255.0, 0.0, 51.0], np.float32)).tolist() == pytest.approx([1.0, 0.0, 0.2])


class TestResize:
    def test_same_size_identity(self, rng):
        img = rng.normal(size=(5, 4, 2)).astype(np.float32)
        assert resize(img, 5, 4).tobytes() == img.tobytes()

    def test_nearest_upscale_blocks(self):
        img = np.array([[1, 2], [3, 4]], np.float32)[..., None]
        assert resize(img, 4, 4)[..., 0].tolist() == [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]

    @pytest.mark.parametrize("method", ["nearest", "bilinear"])
    def test_constant_stays_constant(self, method):
        out = resize(np.full((3, 5, 1), 0.7, np.float32), 11, 2, method)
        assert out.shape == (11, 2, 1)
        np.testing.assert_allclose(out, 0.7, rtol=1e-6)


def write_ppm(path, rgb, h=4, w=4):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_ppm(np.full((h, w, 3), rgb, np.float32)))


class TestLoadDataset:
    def test_counts_and_labels(self, tmp_path):
        for letter in "jihgfedcba":  # creation order must not matter
            for i in range(5):
                write_ppm(tmp_path / letter / f"{i}.ppm", 10 * i)
        data = load_dataset(tmp_path, (8, 8, 1))
        assert len(data) == 50 and data.class_count == 10
        assert data.class_names == list("abcdefghij")
        assert all(s.label == 2 for s in data.samples if "/c/" in s.source_path)
        assert data.samples[0].image.shape == (8, 8, 1)
        again = load_dataset(tmp_path, (8, 8, 1))
        assert [s.source_path for s in again.samples] == [s.source_path for s in data.samples]

    def test_pixel_range(self, tmp_path):
        write_ppm(tmp_path / "a" / "x.ppm", 255)
        write_ppm(tmp_path / "b" / "x.ppm", 51)
        data = load_dataset(tmp_path, (4, 4, 3))
        assert data.samples[0].image.max() == 1.0
        np.testing.assert_allclose(data.samples[1].image, 0.2)

    def test_undecodable_files_are_reported(self, tmp_path):
        write_ppm(tmp_path / "a" / "good.ppm", 0)
        (tmp_path / "a" / "bad.ppm").write_bytes(b"P3 garbage")
        write_ppm(tmp_path / "b" / "good.ppm", 0)
        data = load_dataset(tmp_path, (4, 4, 1))
        assert len(data) == 2 and len(data.errors) == 1
        path, reason = data.error_report().rstrip("\n").split("\t")
        assert path.endswith("bad.ppm") and reason

    def test_empty_root(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "missing")


KEYPOINTS_21 = {
    "image_width": 64,
    "image_height": 48,
    "points": [{"x": 10 + i, "y": 5 + 2 * i, "confidence": 0.9} for i in range(21)],
}


class TestKeypoints:
    def test_parse_21_points(self):
        kps = read_keypoints_json(json.dumps(KEYPOINTS_21).encode())
        assert kps.points.shape == (21, 2) and kps.points[3].tolist() == [13, 11]
        assert kps.image_width == 64 and kps.confidence is not None

    def test_optional_confidence(self):
        kps = read_keypoints_json('{"image_width": 4, "image_height": 4, "points": [{"x": 1, "y": 2}]}')
        assert kps.confidence is None

    @pytest.mark.parametrize("text", [
        '{"image_width": 4, "image_height": 4, "points": []}',
        '{"image_width": 4, "points": [{"x": 1, "y": 1}]}',
        '{"image_width": 4, "image_height": 4, "points": [{"x": 1}]}',
        '{"image_width": 4, "image_height": 4, "points": [{"x": "nan", "y": 1}]}',
        "{not json",
    ])
    def test_format_errors(self, text):
        with pytest.raises(FormatError):
            read_keypoints_json(text)


def kps(points, w=64, h=64):
    return KeypointSet(np.array(points, dtype=float), w, h)


class TestCrop:
    def test_worked_box(self):
        # hull x in [10, 20], y in [10, 30]; squared to 20 about (15, 20)
        assert crop_box(kps([(10, 10), (20, 30)]), 64, 64, 0.0) == (5, 10, 25, 30)

    def test_margin_grows_each_edge(self):
        assert crop_box(kps([(20, 20), (30, 30)]), 64, 64, 0.25) == (17, 17, 33, 33)

    def test_single_point_degenerate(self):
        with pytest.raises(CropError):
            crop_box(kps([(5, 5)]), 64, 64, 0.0)

    def test_full_span_is_whole_image(self, rng):
        img = rng.normal(size=(16, 16, 3)).astype(np.float32)
        out = crop_from_keypoints(img, kps([(0, 0), (16, 16), (8, 3)], 16, 16), 0.0)
        assert np.array_equal(out, img)

    def test_clamped_to_bounds(self):
        assert crop_box(kps([(0, 0), (10, 4)]), 64, 64, 0.5) == (0, 0, 15, 12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 40), st.floats(0, 30)), min_size=2, max_size=21), st.floats(0, 1))
    def test_output_shape_and_pixel_origin(self, points, margin):
        img = np.arange(30 * 40, dtype=np.float32).reshape(30, 40, 1)
        try:
            out = crop_from_keypoints(img, kps(points, 40, 30), margin, (8, 8, 1))
        except CropError:
            return
        assert out.shape == (8, 8, 1)
        assert set(out.ravel().tolist()) <= set(img.ravel().tolist())
