"""Frequency-domain Gaussian filtering and multi-band merging.

Two merge modes exist. merge_literal executes the published band-sum
pseudocode verbatim (bands only, no base band, mask weights image A, band
sign G^l - G^{l-1}). merge_complete is the pipeline default: it uses
fine-minus-coarse bands plus the blended coarsest Gaussian as base band,
which makes the reconstruction identities exact — a mask of all ones
returns the face image, all zeros the background image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .facemask import BlendMask
from .imagecore import Image, histogram_match


class BlendError(Exception):
    pass


@dataclass(frozen=True)
class FilterBank:
    """Gaussian widths per level: sigma_1 = 0 (identity), sigma_l = 2^(l-2)."""

    levels: int = 10
    sigmas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.levels < 2:
            raise BlendError("need at least 2 levels")
        if not self.sigmas:
            object.__setattr__(
                self,
                "sigmas",
                (0.0,) + tuple(float(2 ** (l - 2)) for l in range(2, self.levels + 1)),
            )
        if len(self.sigmas) != self.levels:
            raise BlendError("sigma count != levels")
        for a, b in zip(self.sigmas[1:], self.sigmas[2:]):
            if b <= a:
                raise BlendError("sigmas must be strictly increasing from level 2")


def gaussian_filter(img: Image, sigma: float) -> Image:
    """Per-channel circular Gaussian blur via frequency-domain multiplication
    with exp(-2*pi^2*sigma^2*(u^2+v^2)) on normalized frequencies."""
    if sigma < 0:
        raise BlendError("sigma must be >= 0")
    if sigma == 0.0:
        return img
    h, w, _ = img.pixels.shape
    u = np.fft.fftfreq(h)[:, None]
    v = np.fft.rfftfreq(w)[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * (u * u + v * v))
    out = np.empty_like(img.pixels)
    for ch in range(img.channels):
        spectrum = np.fft.rfft2(img.pixels[:, :, ch])
        out[:, :, ch] = np.fft.irfft2(spectrum * transfer, s=(h, w))
    return Image(out)


def _filter_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """gaussian_filter for a bare 2-d array (the mask)."""
    if sigma == 0.0:
        return arr
    h, w = arr.shape
    u = np.fft.fftfreq(h)[:, None]
    v = np.fft.rfftfreq(w)[None, :]
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * (u * u + v * v))
    return np.fft.irfft2(np.fft.rfft2(arr) * transfer, s=(h, w))


def _check_dims(a: Image, b: Image, m: BlendMask):
    if a.pixels.shape != b.pixels.shape:
        raise BlendError(f"image dims differ: {a.pixels.shape} vs {b.pixels.shape}")
    if (m.height, m.width) != (a.height, a.width):
        raise BlendError("mask dims differ from images")


def _gaussian_stack(px: np.ndarray, bank: FilterBank) -> list[np.ndarray]:
    img = Image(px)
    return [gaussian_filter(img, s).pixels for s in bank.sigmas]


def _mask_stack(m: BlendMask, bank: FilterBank) -> list[np.ndarray]:
    return [_filter_array(m.weights, s)[:, :, None] for s in bank.sigmas]


def merge_literal(a: Image, b: Image, m: BlendMask, bank: FilterBank | None = None) -> Image:
    """Verbatim band accumulation: sum over l = 2..n of
    G_M^{l-1} * (G_A^l - G_A^{l-1}) + (1 - G_M^{l-1}) * (G_B^l - G_B^{l-1})."""
    bank = bank or FilterBank()
    _check_dims(a, b, m)
    ga = _gaussian_stack(a.pixels, bank)
    gb = _gaussian_stack(b.pixels, bank)
    gm = _mask_stack(m, bank)
    result = np.zeros_like(a.pixels)
    for l in range(1, bank.levels):  # l is the 0-based index of level l+1
        la = ga[l] - ga[l - 1]
        lb = gb[l] - gb[l - 1]
        result = result + gm[l - 1] * la + (1.0 - gm[l - 1]) * lb
    return Image(result)


def merge_complete(
    a: Image,
    b: Image,
    m: BlendMask,
    bank: FilterBank | None = None,
    mask_selects: str = "b",
) -> Image:
    """Band blend with the coarsest base band added, so mask 1 reproduces the
    selected face image exactly and mask 0 the other.

    mask_selects names the image that mask weight 1 picks: "b" (default, the
    de-identified image) or "a" (the literal published weighting).
    """
    bank = bank or FilterBank()
    _check_dims(a, b, m)
    if mask_selects not in ("a", "b"):
        raise BlendError("mask_selects must be 'a' or 'b'")
    face, back = (b, a) if mask_selects == "b" else (a, b)
    gf = _gaussian_stack(face.pixels, bank)
    gb_ = _gaussian_stack(back.pixels, bank)
    gm = _mask_stack(m, bank)
    result = np.zeros_like(a.pixels)
    for l in range(1, bank.levels):
        lf = gf[l - 1] - gf[l]  # fine minus coarse
        lb = gb_[l - 1] - gb_[l]
        result = result + gm[l - 1] * lf + (1.0 - gm[l - 1]) * lb
    n = bank.levels - 1
    result = result + gm[n] * gf[n] + (1.0 - gm[n]) * gb_[n]
    return Image(result)


def base_band(
    a: Image, b: Image, m: BlendMask, bank: FilterBank | None = None, mask_selects: str = "a"
) -> Image:
    """The blended coarsest Gaussian: G_M^n * G_face^n + (1 - G_M^n) * G_back^n."""
    bank = bank or FilterBank()
    _check_dims(a, b, m)
    face, back = (b, a) if mask_selects == "b" else (a, b)
    gm_n = _filter_array(m.weights, bank.sigmas[-1])[:, :, None]
    gf = gaussian_filter(face, bank.sigmas[-1]).pixels
    gb_ = gaussian_filter(back, bank.sigmas[-1]).pixels
    return Image(gm_n * gf + (1.0 - gm_n) * gb_)


def merge_and_match(
    a: Image, b: Image, m: BlendMask, bank: FilterBank | None = None, mask_selects: str = "b"
) -> Image:
    """merge_complete followed by histogram matching to A and clamping."""
    merged = merge_complete(a, b, m, bank, mask_selects=mask_selects).clamped()
    return histogram_match(merged, a).clamped()
