import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facedeid.imagecore import (
    Image,
    ImageError,
    compute_histogram,
    histogram_match,
    load_image,
    quantize_u8,
    save_image,
)

from conftest import random_image


class TestImageType:
    def test_flat_data_layout(self):
        img = Image(np.arange(12, dtype=float).reshape(2, 2, 3) / 12.0)
        assert img.data.shape == (12,)
        assert img.data[3] == img.pixels[0, 1, 0]

    def test_rejects_zero_dims(self):
        with pytest.raises(ImageError):
            Image(np.zeros((0, 4, 1)))

    def test_rejects_bad_channels(self):
        with pytest.raises(ImageError):
            Image(np.zeros((2, 2, 2)))

    def test_grayscale_2d_promoted(self):
        img = Image(np.zeros((3, 4)))
        assert img.channels == 1


class TestQuantization:
    def test_half_rounds_up(self):
        # round(0.5 * 255) = round(127.5) -> 128 with round-half-up
        assert quantize_u8(np.array([0.5]))[0] == 128

    def test_extremes(self):
        assert quantize_u8(np.array([0.0]))[0] == 0
        assert quantize_u8(np.array([1.0]))[0] == 255

    def test_clamps_before_quantizing(self):
        assert quantize_u8(np.array([-0.5, 1.5])).tolist() == [0, 255]


class TestFileIO:
    def test_ppm_all_white(self, tmp_path):
        p = tmp_path / "white.ppm"
        p.write_bytes(b"P6\n2 2\n255\n" + b"\xff" * 12)
        img = load_image(p)
        assert img.pixels.shape == (2, 2, 3)
        assert np.all(img.pixels == 1.0)

    def test_ascii_pgm(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(b"P2\n# comment\n2 1\n255\n0 128\n")
        img = load_image(p)
        assert img.pixels[0, 0, 0] == 0.0
        assert img.pixels[0, 1, 0] == 128 / 255

    def test_png_gray_pixel(self, tmp_path):
        from PIL import Image as PILImage

        p = tmp_path / "one.png"
        PILImage.fromarray(np.full((1, 1, 3), 128, dtype=np.uint8)).save(p)
        img = load_image(p)
        assert np.allclose(img.pixels, 128 / 255)

    @pytest.mark.parametrize("suffix", [".pgm", ".png"])
    def test_round_trip_bytes_identical(self, rng, tmp_path, suffix):
        img = random_image(rng, 8, 8, 1)
        p1 = tmp_path / ("a" + suffix)
        p2 = tmp_path / ("b" + suffix)
        save_image(img, p1)
        save_image(load_image(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_save_all_zero_payload(self, tmp_path):
        p = tmp_path / "z.pgm"
        save_image(Image(np.zeros((2, 3, 1))), p)
        raw = p.read_bytes()
        assert raw.endswith(b"\x00" * 6)

    def test_reload_error_within_quantization_bound(self, rng, tmp_path):
        img = random_image(rng, 8, 8, 3)
        p = tmp_path / "q.ppm"
        save_image(img, p)
        back = load_image(p)
        assert np.max(np.abs(back.pixels - img.pixels)) <= 1.0 / 255.0 + 1e-12

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ImageError):
            load_image(tmp_path / "missing.ppm")

    def test_unsupported_format(self, tmp_path):
        p = tmp_path / "x.ppm"
        p.write_bytes(b"GARBAGE")
        with pytest.raises(ImageError):
            load_image(p)

    def test_bad_maxval_rejected(self, tmp_path):
        p = tmp_path / "deep.pgm"
        p.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
        with pytest.raises(ImageError):
            load_image(p)


class TestHistogram:
    def test_cdf_invariants(self, rng):
        img = random_image(rng, 16, 16, 3)
        hist = compute_histogram(img)
        assert np.all(np.diff(hist.cdf, axis=1) >= 0)
        assert np.allclose(hist.cdf[:, -1], 1.0, atol=1e-9)

    def test_counts_sum_to_pixels(self, rng):
        img = random_image(rng, 7, 5, 1)
        assert compute_histogram(img).bins.sum() == 35


class TestHistogramMatch:
    def test_identity_match(self, rng):
        img = random_image(rng, 16, 16, 1)
        out = histogram_match(img, img)
        assert np.max(np.abs(out.pixels - img.pixels)) <= 1.0 / 255.0 + 1e-12

    def test_constant_to_constant(self):
        src = Image(np.full((4, 4, 1), 0.2))
        ref = Image(np.full((4, 4, 1), 0.8))
        out = histogram_match(src, ref)
        assert np.allclose(out.pixels, quantize_u8(np.array([0.8]))[0] / 255.0)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ImageError):
            histogram_match(random_image(rng, 4, 4, 1), random_image(rng, 4, 4, 3))

    def test_cdf_closeness_oracle(self, rng):
        src = random_image(rng, 16, 16, 1)
        ref = random_image(rng, 16, 16, 1)
        out = histogram_match(src, ref)
        # independent counting of both CDFs on the 8-bit grid
        def cdf_counts(img):
            levels = quantize_u8(img.pixels).reshape(-1)
            counts = [0] * 256
            for v in levels:
                counts[v] += 1
            total = len(levels)
            acc, cdf = 0, []
            for c in counts:
                acc += c
                cdf.append(acc / total)
            return np.array(cdf)

        # frozen value computed by this oracle for the fixture seed; 16x16
        # images carry 1/256 of mass per pixel and quantization collisions
        # cost a few bins
        dist = np.max(np.abs(cdf_counts(out) - cdf_counts(ref)))
        assert dist == pytest.approx(4.0 / 256.0)
        for seed in range(10):
            r = np.random.default_rng(seed)
            s2 = Image(r.random((16, 16, 1)))
            r2 = Image(r.random((16, 16, 1)))
            o2 = histogram_match(s2, r2)
            assert np.max(np.abs(cdf_counts(o2) - cdf_counts(r2))) <= 6.0 / 256.0

    def test_idempotent(self, rng):
        src = random_image(rng, 16, 16, 1)
        ref = random_image(rng, 16, 16, 1)
        once = histogram_match(src, ref)
        twice = histogram_match(once, ref)
        assert np.array_equal(quantize_u8(once.pixels), quantize_u8(twice.pixels))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_output_within_reference_range(self, seed):
        r = np.random.default_rng(seed)
        src = Image(r.random((8, 8, 1)))
        ref = Image(r.random((8, 8, 1)) * 0.5 + 0.25)
        out = histogram_match(src, ref)
        ref_u8 = quantize_u8(ref.pixels)
        assert out.pixels.min() >= ref_u8.min() / 255.0 - 1e-12
        assert out.pixels.max() <= ref_u8.max() / 255.0 + 1e-12
