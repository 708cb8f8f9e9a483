import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from miniconvnet.augment import AugmentConfig, draw_params, hflip, random_augment, rotate, shift

small_images = arrays(np.float32, st.tuples(st.integers(1, 8), st.integers(1, 8), st.integers(1, 3)),
                      elements=st.floats(-10, 10, width=32))
square_images = st.integers(1, 7).flatmap(
    lambda n: arrays(np.float32, (n, n, 2), elements=st.floats(-10, 10, width=32)))

TWO_BY_TWO = np.array([[1, 2], [3, 4]], dtype=np.float32)[..., None]


def grid(img):
    return img[..., 0].tolist()


def test_hflip_example():
    assert grid(hflip(TWO_BY_TWO)) == [[2, 1], [4, 3]]


def test_hflip_symmetric_unchanged():
    img = np.array([[1, 2, 1], [5, 0, 5]], dtype=np.float32)[..., None]
    assert np.array_equal(hflip(img), img)


@settings(max_examples=60, deadline=None)
@given(small_images)
def test_hflip_involution(img):
    assert hflip(hflip(img)).tobytes() == img.tobytes()


def test_shift_examples():
    assert grid(shift(TWO_BY_TWO, 1, 0, 0)) == [[0, 1], [0, 3]]
    assert grid(shift(TWO_BY_TWO, 0, -1, 9)) == [[3, 4], [9, 9]]
    assert np.array_equal(shift(TWO_BY_TWO, 0, 0), TWO_BY_TWO)
    assert np.all(shift(TWO_BY_TWO, 2, 0, 5) == 5) and np.all(shift(TWO_BY_TWO, 0, -3, 5) == 5)


@settings(max_examples=60, deadline=None)
@given(st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2))
def test_shift_composition_on_interior_content(a, b, c, d):
    img = np.zeros((12, 12, 1), np.float32)
    img[4:8, 4:8, 0] = np.arange(16).reshape(4, 4) + 1
    assert np.array_equal(shift(shift(img, a, b), c, d), shift(img, a + c, b + d))


def test_rotate_identity_angles():
    img = np.random.default_rng(0).normal(size=(5, 7, 3)).astype(np.float32)
    for deg in (0, 360, -360, 720):
        assert rotate(img, deg).tobytes() == img.tobytes()


def test_rotate_90_closed_form():
    assert grid(rotate(TWO_BY_TWO, 90)) == [[2, 4], [1, 3]]
    img = np.arange(9, dtype=np.float32).reshape(3, 3, 1)
    for k in range(4):
        assert np.array_equal(rotate(img, 90 * k), np.rot90(img, k, axes=(0, 1)))


@settings(max_examples=60, deadline=None)
@given(square_images, st.integers(-4, 4))
def test_right_angle_rotation_permutes_pixels(img, k):
    out = rotate(img, 90 * k)
    assert sorted(out.ravel().tolist()) == sorted(img.ravel().tolist())


def test_rotate_fills_corners():
    img = np.ones((9, 9, 1), np.float32)
    out = rotate(img, 45, fill=-1.0)
    assert out[0, 0, 0] == -1.0 and out[4, 4, 0] == 1.0 and out.shape == img.shape


def test_rotate_bilinear_constant_interior():
    img = np.full((9, 9, 2), 0.5, np.float32)
    out = rotate(img, 30, interpolation="bilinear", fill=0.5)
    np.testing.assert_allclose(out, 0.5, atol=1e-6)


class TestRandomAugment:
    def test_zeroed_config_is_identity(self):
        img = np.random.default_rng(0).normal(size=(8, 8, 1)).astype(np.float32)
        out = random_augment(img, AugmentConfig.disabled(), np.random.default_rng(5))
        assert np.array_equal(out, img) and out is not img

    def test_same_seed_same_output(self):
        img = np.random.default_rng(0).normal(size=(16, 16, 3)).astype(np.float32)
        cfg = AugmentConfig()
        a = random_augment(img, cfg, np.random.default_rng(42))
        b = random_augment(img, cfg, np.random.default_rng(42))
        assert a.tobytes() == b.tobytes()

    def test_flip_rate_binomial_bound(self):
        cfg = AugmentConfig(flip_prob=0.5)
        rng = np.random.default_rng(2024)
        n = 10_000
        flips = sum(draw_params((32, 32), cfg, rng)[0] for _ in range(n))
        assert abs(flips / n - 0.5) <= 3 * np.sqrt(0.25 / n)

    def test_shift_range(self):
        cfg = AugmentConfig(flip_prob=0, max_shift_frac=(0.1, 0.25), max_rotate_deg=0)
        rng = np.random.default_rng(0)
        draws = [draw_params((32, 40), cfg, rng) for _ in range(2000)]
        dxs, dys = {d[1] for d in draws}, {d[2] for d in draws}
        assert dxs == set(range(-4, 5)) and dys == set(range(-8, 9))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AugmentConfig(flip_prob=1.5)
        with pytest.raises(ValueError):
            AugmentConfig(max_shift_frac=1.0)
        with pytest.raises(ValueError):
            AugmentConfig(interpolation="cubic")
