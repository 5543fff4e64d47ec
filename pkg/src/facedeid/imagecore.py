"""Core image representation, PNG/PPM IO, and histogram matching.

Images are stored as float64 arrays of shape (height, width, channels) with
intensities in [0, 1]. Files are 8-bit; the quantization rule is
round-half-up of v*255.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageError(Exception):
    """Raised for unreadable, unsupported, or inconsistent image data."""


@dataclass(frozen=True)
class Image:
    """Dense float raster, channel-last, intensities nominally in [0, 1]."""

    pixels: np.ndarray  # shape (h, w, c), float64

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ImageError(f"expected 2-d or 3-d pixel array, got ndim={px.ndim}")
        h, w, c = px.shape
        if h == 0 or w == 0:
            raise ImageError("zero-dimension image")
        if c not in (1, 3):
            raise ImageError(f"unsupported channel count {c}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Row-major channel-interleaved flat view."""
        return self.pixels.reshape(-1)

    def clamped(self) -> "Image":
        return Image(np.clip(self.pixels, 0.0, 1.0))

    def allclose(self, other: "Image", atol: float = 0.0) -> bool:
        return self.pixels.shape == other.pixels.shape and np.allclose(
            self.pixels, other.pixels, rtol=0.0, atol=atol
        )


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Quantize [0,1] floats to bytes: round-half-up of v*255, after clamping."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


@dataclass(frozen=True)
class Histogram:
    """256-bin per-channel counts with the normalized cumulative distribution."""

    bins: np.ndarray  # (channels, 256) counts
    cdf: np.ndarray  # (channels, 256) normalized cumulative counts


def compute_histogram(img: Image) -> Histogram:
    u8 = quantize_u8(img.pixels)
    c = img.channels
    bins = np.empty((c, 256), dtype=np.int64)
    for ch in range(c):
        bins[ch] = np.bincount(u8[:, :, ch].reshape(-1), minlength=256)
    total = img.height * img.width
    cdf = np.cumsum(bins, axis=1) / float(total)
    return Histogram(bins=bins, cdf=cdf)


# ---------------------------------------------------------------------------
# File IO


def load_image(path) -> Image:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ImageError(f"cannot read {path}: {e}") from e
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(raw, path)
    if raw[:2] in (b"P2", b"P3", b"P5", b"P6"):
        return _load_pnm(raw, path)
    raise ImageError(f"unsupported file format: {path}")


def save_image(img: Image, path) -> None:
    path = Path(path)
    suffix = path.suffix.lower()
    u8 = quantize_u8(img.pixels)
    try:
        if suffix == ".png":
            _save_png(u8, path)
        elif suffix in (".ppm", ".pgm", ".pnm"):
            _save_pnm(u8, path)
        else:
            raise ImageError(f"unsupported output format: {path}")
    except OSError as e:
        raise ImageError(f"cannot write {path}: {e}") from e


def _load_png(raw: bytes, path: Path) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(io.BytesIO(raw)) as pil:
        if pil.mode not in ("L", "RGB"):
            if pil.mode in ("I;16", "I", "F"):
                raise ImageError(f"unsupported bit depth in {path} (mode {pil.mode})")
            pil = pil.convert("RGB" if "A" in pil.mode or len(pil.getbands()) >= 3 else "L")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    if arr.size == 0:
        raise ImageError(f"zero-dimension image: {path}")
    return Image(arr)


def _save_png(u8: np.ndarray, path: Path) -> None:
    from PIL import Image as PILImage

    arr = u8[:, :, 0] if u8.shape[2] == 1 else u8
    PILImage.fromarray(arr, mode="L" if u8.shape[2] == 1 else "RGB").save(path, format="PNG")


def _load_pnm(raw: bytes, path: Path) -> Image:
    magic = raw[:2].decode("ascii")
    tokens, data_offset = _pnm_header_tokens(raw, n_tokens=3)
    width, height, maxval = (int(t) for t in tokens)
    if width == 0 or height == 0:
        raise ImageError(f"zero-dimension image: {path}")
    if maxval != 255:
        raise ImageError(f"unsupported maxval {maxval} in {path} (only 255)")
    channels = 3 if magic in ("P3", "P6") else 1
    count = width * height * channels
    if magic in ("P2", "P3"):
        values = raw[data_offset:].split()
        if len(values) < count:
            raise ImageError(f"truncated ASCII PNM: {path}")
        arr = np.array([int(v) for v in values[:count]], dtype=np.float64)
    else:
        payload = raw[data_offset : data_offset + count]
        if len(payload) < count:
            raise ImageError(f"truncated binary PNM: {path}")
        arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return Image(arr.reshape(height, width, channels) / 255.0)


def _pnm_header_tokens(raw: bytes, n_tokens: int):
    """Parse the PNM header after the magic; returns tokens and payload offset."""
    tokens = []
    i = 2
    while len(tokens) < n_tokens:
        if i >= len(raw):
            raise ImageError("truncated PNM header")
        ch = raw[i : i + 1]
        if ch == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(raw) and not raw[j : j + 1].isspace():
                j += 1
            tokens.append(raw[i:j].decode("ascii"))
            i = j
    # exactly one whitespace byte separates the header from binary payload
    return tokens, i + 1


def _save_pnm(u8: np.ndarray, path: Path) -> None:
    h, w, c = u8.shape
    magic = b"P6" if c == 3 else b"P5"
    header = magic + b"\n%d %d\n255\n" % (w, h)
    path.write_bytes(header + u8.tobytes())


# ---------------------------------------------------------------------------
# Histogram matching


def histogram_match(source: Image, reference: Image) -> Image:
    """Remap source intensities so the output CDF approximates the reference CDF.

    Per channel, each 256-bin source level is mapped to the populated
    reference bin whose CDF value is nearest, ties broken toward the lower
    bin. Output values live on the 8-bit grid (bin/255).
    """
    if source.channels != reference.channels:
        raise ImageError(
            f"channel mismatch: source {source.channels} vs reference {reference.channels}"
        )
    src_hist = compute_histogram(source)
    ref_hist = compute_histogram(reference)
    src_u8 = quantize_u8(source.pixels)
    out = np.empty_like(source.pixels)
    for ch in range(source.channels):
        support = np.nonzero(ref_hist.bins[ch])[0]
        support_cdf = ref_hist.cdf[ch][support]
        mapping = np.empty(256, dtype=np.float64)
        for b in range(256):
            target = src_hist.cdf[ch][b]
            dist = np.abs(support_cdf - target)
            # argmin returns the first (lowest-bin) minimizer, the tie rule
            mapping[b] = support[int(np.argmin(dist))] / 255.0
        out[:, :, ch] = mapping[src_u8[:, :, ch]]
    return Image(out)
