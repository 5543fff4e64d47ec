import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facedeid.metrics import (
    SSIM_C1,
    SSIM_C2,
    MetricError,
    attack_success_rate,
    metric_report,
    mse,
    psnr,
    ssim,
    ssim_windowed,
)
from facedeid.imagecore import Image

from conftest import random_image


def brute_force_ssim(x, y, c1=SSIM_C1, c2=SSIM_C2):
    """Naive loop re-implementation on 8-bit-scaled luminance."""
    def lum(img):
        px = img.pixels * 255.0
        if img.channels == 1:
            return px[:, :, 0]
        return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]

    a, b = lum(x), lum(y)
    n = a.size
    mu_a = sum(v for row in a for v in row) / n
    mu_b = sum(v for row in b for v in row) / n
    var_a = sum((v - mu_a) ** 2 for row in a for v in row) / n
    var_b = sum((v - mu_b) ** 2 for row in b for v in row) / n
    cov = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            cov += (a[i, j] - mu_a) * (b[i, j] - mu_b)
    cov /= n
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )


def brute_force_psnr(x, y):
    total = 0.0
    count = 0
    for i in range(x.height):
        for j in range(x.width):
            for c in range(x.channels):
                d = (x.pixels[i, j, c] - y.pixels[i, j, c]) * 255.0
                total += d * d
                count += 1
    m = total / count
    return math.inf if m == 0 else 10 * math.log10(255.0**2 / m)


class TestSsim:
    def test_identical_is_exactly_one(self, rng):
        img = random_image(rng, 8, 8, 3)
        assert ssim(img, img) == 1.0

    def test_black_vs_white_degenerate(self):
        x = Image(np.zeros((4, 4, 1)))
        y = Image(np.ones((4, 4, 1)))
        # mu_x = 0, mu_y = 255, all variances zero:
        # (c1 * c2) / ((255^2 + c1) * c2)
        expected = SSIM_C1 / (255.0**2 + SSIM_C1)
        assert ssim(x, y) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1e-4, rel=1e-2)

    def test_anticorrelated_negative(self, rng):
        base = rng.random((8, 8, 1))
        x = Image(0.5 + 0.4 * (base - base.mean()))
        y = Image(0.5 - 0.4 * (base - base.mean()))
        assert ssim(x, y) < 0.0

    def test_matches_brute_force(self, rng):
        for _ in range(10):
            x = random_image(rng, 16, 16, 1)
            y = random_image(rng, 16, 16, 1)
            assert ssim(x, y) == pytest.approx(brute_force_ssim(x, y), abs=1e-9)

    def test_color_uses_luminance(self, rng):
        x = random_image(rng, 8, 8, 3)
        y = random_image(rng, 8, 8, 3)
        assert ssim(x, y) == pytest.approx(brute_force_ssim(x, y), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 5000))
    def test_symmetry_and_range(self, seed):
        r = np.random.default_rng(seed)
        x = Image(r.random((6, 6, 1)))
        y = Image(r.random((6, 6, 1)))
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)
        assert -1.0 <= ssim(x, y) <= 1.0

    def test_dim_mismatch(self, rng):
        with pytest.raises(MetricError):
            ssim(random_image(rng, 4, 4, 1), random_image(rng, 8, 8, 1))

    def test_nonpositive_constants_rejected(self, rng):
        img = random_image(rng)
        with pytest.raises(MetricError):
            ssim(img, img, c1=0.0)

    def test_windowed_mode_identical_images(self, rng):
        img = random_image(rng, 16, 16, 1)
        assert ssim_windowed(img, img) == pytest.approx(1.0)


class TestPsnr:
    def test_identical_infinite(self, rng):
        img = random_image(rng)
        assert math.isinf(psnr(img, img))

    def test_one_level_uniform_error(self):
        x = Image(np.full((8, 8, 1), 100 / 255))
        y = Image(np.full((8, 8, 1), 101 / 255))
        assert psnr(x, y) == pytest.approx(10 * math.log10(255.0**2), abs=1e-6)

    def test_doubling_error_costs_6db(self):
        x = Image(np.full((8, 8, 1), 0.5))
        y1 = Image(np.full((8, 8, 1), 0.5 + 10 / 255))
        y2 = Image(np.full((8, 8, 1), 0.5 + 20 / 255))
        assert psnr(x, y1) - psnr(x, y2) == pytest.approx(20 * math.log10(2), abs=1e-9)

    def test_matches_brute_force(self, rng):
        for _ in range(10):
            x = random_image(rng, 16, 16, 3)
            y = random_image(rng, 16, 16, 3)
            assert psnr(x, y) == pytest.approx(brute_force_psnr(x, y), abs=1e-9)

    def test_monotone_in_noise_amplitude(self, rng):
        x = random_image(rng, 8, 8, 1)
        noise = rng.standard_normal(x.pixels.shape)
        values = [
            psnr(x, Image(x.pixels + amp * noise)) for amp in (0.01, 0.02, 0.04, 0.08)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_report_invariant(self, rng):
        img = random_image(rng)
        rep = metric_report(img, img)
        assert rep.mse == 0.0 and math.isinf(rep.psnr) and rep.ssim == 1.0
        assert rep.to_dict()["psnr"] == "inf"

    def test_mse_dim_mismatch(self, rng):
        with pytest.raises(MetricError):
            mse(random_image(rng, 4, 4, 1), random_image(rng, 4, 4, 3))


class TestAttackSuccessRate:
    def test_three_of_four(self):
        assert attack_success_rate(3, 4) == 0.75

    def test_zero_of_n(self):
        assert attack_success_rate(0, 17) == 0.0

    def test_full_test_set(self):
        assert attack_success_rate(442, 442) == 1.0

    def test_zero_total_rejected(self):
        with pytest.raises(MetricError):
            attack_success_rate(0, 0)

    def test_successes_above_total_rejected(self):
        with pytest.raises(MetricError):
            attack_success_rate(5, 4)
