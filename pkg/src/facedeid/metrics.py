"""Image quality metrics (SSIM, PSNR/MSE) and the attack success rate.

Both metrics work on the 8-bit scale (intensities * 255); color images are
reduced to luminance 0.299R + 0.587G + 0.114B first. SSIM defaults to the
single global-statistics form; an optional sliding-window mean mode exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imagecore import Image

SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2


class MetricError(Exception):
    pass


@dataclass(frozen=True)
class MetricReport:
    ssim: float
    psnr: float  # math.inf marks identical images
    mse: float

    def to_dict(self) -> dict:
        return {
            "ssim": self.ssim,
            "psnr": "inf" if math.isinf(self.psnr) else self.psnr,
            "mse": self.mse,
        }


def _luminance_u255(img: Image) -> np.ndarray:
    px = img.pixels * 255.0
    if img.channels == 1:
        return px[:, :, 0]
    return 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]


def _check_same_dims(x: Image, y: Image):
    if x.pixels.shape != y.pixels.shape:
        raise MetricError(f"dimension mismatch: {x.pixels.shape} vs {y.pixels.shape}")


def ssim(x: Image, y: Image, c1: float = SSIM_C1, c2: float = SSIM_C2) -> float:
    """Global-statistics structural similarity on 8-bit-scaled luminance."""
    _check_same_dims(x, y)
    if c1 <= 0 or c2 <= 0:
        raise MetricError("SSIM constants must be positive")
    a = _luminance_u255(x)
    b = _luminance_u255(y)
    return _ssim_stats(a, b, c1, c2)


def _ssim_stats(a: np.ndarray, b: np.ndarray, c1: float, c2: float) -> float:
    mu_a = a.mean()
    mu_b = b.mean()
    var_a = ((a - mu_a) ** 2).mean()
    var_b = ((b - mu_b) ** 2).mean()
    cov = ((a - mu_a) * (b - mu_b)).mean()
    return float(
        ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
    )


def ssim_windowed(
    x: Image, y: Image, window: int = 11, c1: float = SSIM_C1, c2: float = SSIM_C2
) -> float:
    """Mean SSIM over all valid uniform window x window patches (optional
    mode, off by default in the pipeline)."""
    _check_same_dims(x, y)
    a = _luminance_u255(x)
    b = _luminance_u255(y)
    h, w = a.shape
    if h < window or w < window:
        return _ssim_stats(a, b, c1, c2)
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            vals.append(
                _ssim_stats(a[i : i + window, j : j + window], b[i : i + window, j : j + window], c1, c2)
            )
    return float(np.mean(vals))


def mse(x: Image, y: Image) -> float:
    """Mean squared error on the 8-bit scale, over all pixels and channels."""
    _check_same_dims(x, y)
    d = (x.pixels - y.pixels) * 255.0
    return float((d * d).mean())


def psnr(x: Image, y: Image) -> float:
    """10*log10(255^2 / MSE); +inf for identical images."""
    m = mse(x, y)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / m)


def metric_report(x: Image, y: Image) -> MetricReport:
    return MetricReport(ssim=ssim(x, y), psnr=psnr(x, y), mse=mse(x, y))


def attack_success_rate(successes: int, total: int) -> float:
    if total < 1:
        raise MetricError("total must be >= 1")
    if not (0 <= successes <= total):
        raise MetricError("successes must lie in [0, total]")
    return successes / total
