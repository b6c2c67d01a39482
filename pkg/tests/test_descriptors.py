import math

import numpy as np
import pytest

from fbp.errors import ConfigurationError, ShapeError
from fbp.descriptors import (
    GRAY_DIM,
    HOG_DIM,
    LBP_BINS,
    LBP_DIM,
    DescriptorConfig,
    extract_descriptor,
    gray_flatten,
    hog,
    lbp,
    rgb_to_gray,
)


def hog_oracle(g):
    """Loop implementation of the same HOG contract, written independently."""
    g = g.astype(np.float64)
    h, w = g.shape
    cells = np.zeros((28, 28, 9))
    for y in range(h):
        for x in range(w):
            gx = g[y, x + 1] - g[y, x - 1] if 0 < x < w - 1 else 0.0
            gy = g[y + 1, x] - g[y - 1, x] if 0 < y < h - 1 else 0.0
            mag = math.hypot(gx, gy)
            ang = math.degrees(math.atan2(gy, gx)) % 180.0
            pos = ang / 20.0
            b0 = int(pos) % 9
            frac = pos - int(pos)
            cells[y // 8, x // 8, b0] += mag * (1 - frac)
            cells[y // 8, x // 8, (b0 + 1) % 9] += mag * frac
    out = []
    for by in range(27):
        for bx in range(27):
            v = np.concatenate(
                [cells[by, bx], cells[by, bx + 1], cells[by + 1, bx], cells[by + 1, bx + 1]]
            )
            v = v / math.sqrt((v ** 2).sum() + 1e-20)
            v = np.clip(v, 0, 0.2)
            v = v / math.sqrt((v ** 2).sum() + 1e-20)
            out.append(v)
    return np.concatenate(out)


def lbp_oracle(g):
    """Loop implementation of blocked uniform LBP histograms."""
    def transitions(code):
        bits = [(code >> i) & 1 for i in range(8)]
        return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))

    uniform = [c for c in range(256) if transitions(c) <= 2]
    to_bin = {c: i for i, c in enumerate(uniform)}
    offs = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]
    hist = np.zeros((14, 14, 59))
    for y in range(1, 223):
        for x in range(1, 223):
            code = 0
            for i, (dy, dx) in enumerate(offs):
                if g[y + dy, x + dx] >= g[y, x]:
                    code |= 1 << (7 - i)
            hist[y // 16, x // 16, to_bin.get(code, 58)] += 1
    return hist.ravel()


def integer_image(seed, lo=0, hi=256):
    rng = np.random.default_rng(seed)
    return rng.integers(lo, hi, size=(224, 224)).astype(np.float32)


class TestHog:
    def test_constant_image_is_zero(self):
        out = hog(np.full((224, 224), 77.0, dtype=np.float32))
        assert out.dim == HOG_DIM
        assert not out.values.any()

    def test_length_is_26244(self):
        assert HOG_DIM == 26244
        assert hog(integer_image(0)).dim == 26244

    def test_vertical_step_edge_hits_bin_zero(self):
        g = np.zeros((224, 224), dtype=np.float32)
        g[:, 112:] = 255.0
        v = hog(g).values.reshape(27, 27, 4, 9)
        energy = (v ** 2).sum(axis=(0, 1, 2))
        assert energy[0] > 0
        assert energy[0] / energy.sum() > 0.999

    def test_dc_invariance(self):
        g = integer_image(1, 0, 200)
        base = hog(g).values
        shifted = hog(g + 40.0).values
        np.testing.assert_allclose(base, shifted, atol=1e-6)

    def test_block_norms_at_most_one(self):
        v = hog(integer_image(2)).values.reshape(27 * 27, 36)
        norms = np.linalg.norm(v, axis=1)
        assert (norms <= 1.0 + 1e-6).all()

    def test_matches_loop_oracle(self):
        g = integer_image(3)
        np.testing.assert_allclose(hog(g).values, hog_oracle(g), atol=1e-5)

    def test_wrong_size_rejected(self):
        with pytest.raises(ShapeError):
            hog(np.zeros((100, 100), dtype=np.float32))


class TestLbp:
    def test_constant_image_single_bin_per_block(self):
        out = lbp(np.full((224, 224), 9.0, dtype=np.float32)).values.reshape(14, 14, 59)
        # ties compare as >=, so every interior pixel codes to 0xFF,
        # the last uniform pattern (bin 57)
        mass_elsewhere = out.sum() - out[:, :, 57].sum()
        assert mass_elsewhere == 0
        assert out.sum() == 222 * 222

    def test_length_is_11564(self):
        assert LBP_DIM == 11564
        assert lbp(integer_image(4)).dim == 11564

    def test_block_sums_count_interior_pixels(self):
        out = lbp(integer_image(5)).values.reshape(14, 14, 59)
        sums = out.sum(axis=2)
        # interior pixels per block: border blocks lose one coded row/column
        expect = np.full((14, 14), 16 * 16)
        expect[0, :] = expect[-1, :] = 15 * 16
        expect[:, 0] = expect[:, -1] = 16 * 15
        expect[0, 0] = expect[0, -1] = expect[-1, 0] = expect[-1, -1] = 15 * 15
        np.testing.assert_array_equal(sums, expect)

    @pytest.mark.parametrize(
        "transform",
        [lambda x: 2.0 * x + 3.0, lambda x: x ** 3, lambda x: np.exp(x / 50.0)],
    )
    def test_monotone_transform_invariance(self, transform):
        g = integer_image(6)
        np.testing.assert_array_equal(lbp(g).values, lbp(transform(g)).values)

    def test_matches_loop_oracle(self):
        g = integer_image(7, 0, 8)  # coarse levels force plenty of ties
        np.testing.assert_array_equal(lbp(g).values, lbp_oracle(g))

    def test_wrong_size_rejected(self):
        with pytest.raises(ShapeError):
            lbp(np.zeros((224, 100), dtype=np.float32))


class TestGrayFlatten:
    def test_constant_is_zero_vector(self):
        out = gray_flatten(np.full((224, 224), 42.0, dtype=np.float32))
        assert out.dim == GRAY_DIM == 50176
        assert not out.values.any()

    def test_two_levels_standardize_to_two_values(self):
        g = np.zeros((224, 224), dtype=np.float32)
        g[:112] = 10.0
        values = gray_flatten(g).values
        assert len(np.unique(values)) == 2
        assert abs(float(values.mean(dtype=np.float64))) < 1e-6
        assert abs(float(values.std(dtype=np.float64)) - 1.0) < 1e-4

    def test_row_major_order(self):
        g = np.arange(224 * 224, dtype=np.float32).reshape(224, 224)
        values = gray_flatten(g).values
        assert (np.diff(values) > 0).all()


class TestGrayConversion:
    def test_luma_weights(self):
        img = np.zeros((3, 2, 2), dtype=np.float32)
        img[0] = 100.0
        assert rgb_to_gray(img)[0, 0] == pytest.approx(29.9, abs=1e-4)
        img = np.zeros((3, 2, 2), dtype=np.float32)
        img[1] = 100.0
        assert rgb_to_gray(img)[0, 0] == pytest.approx(58.7, abs=1e-4)

    def test_single_channel_passthrough(self):
        g = np.random.default_rng(8).uniform(0, 255, (1, 4, 4)).astype(np.float32)
        np.testing.assert_array_equal(rgb_to_gray(g), g[0])


def test_extract_descriptor_dispatch():
    g = integer_image(9)
    assert extract_descriptor(g, "hog").dim == HOG_DIM
    assert extract_descriptor(g, "lbp").dim == LBP_DIM
    assert extract_descriptor(g, "gray").dim == GRAY_DIM
    assert DescriptorConfig("hog").dim == HOG_DIM
    with pytest.raises(ConfigurationError):
        extract_descriptor(g, "sift")
