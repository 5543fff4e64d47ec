"""Facial-landmark ingestion, face rectangle, masking, blend mask, alignment.

Landmarks come from JSON files (the upstream detector is out of scope); all
geometry uses pixel coordinates with origin at the top-left, x rightward,
y downward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .imagecore import Image


class MaskError(Exception):
    pass


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray  # (n, 2) float64, columns (x, y)
    schema: str = "generic"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise MaskError("points must be an (n, 2) array")
        if pts.shape[0] < 3:
            raise MaskError("insufficient landmarks: need at least 3 points")
        object.__setattr__(self, "points", pts)

    def translated(self, dx: float, dy: float) -> "LandmarkSet":
        return LandmarkSet(self.points + np.array([dx, dy]), self.schema)


@dataclass(frozen=True)
class FaceRect:
    """Integer pixel bounds, inclusive-exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise MaskError(f"degenerate rectangle {self}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class BlendMask:
    weights: np.ndarray  # (h, w) float64 in [0, 1]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise MaskError("mask weights must be 2-d")
        if w.size and (w.min() < 0.0 or w.max() > 1.0):
            raise MaskError("mask weights outside [0, 1]")
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]


def load_landmarks(path, image_dims: tuple[int, int] | None = None) -> LandmarkSet:
    """Read the landmark JSON schema: {"schema": ..., "points": [[x, y], ...]}.

    image_dims, when given as (height, width), turns on bounds validation.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MaskError(f"malformed landmark file {path}: {e}") from e
    if isinstance(doc, list):
        points, schema = doc, "generic"
    elif isinstance(doc, dict) and "points" in doc:
        points = doc["points"]
        schema = doc.get("schema", "generic")
    else:
        raise MaskError(f"malformed landmark file {path}: expected list or object with 'points'")
    if not isinstance(points, list) or len(points) < 3:
        raise MaskError("insufficient landmarks: need at least 3 points")
    if schema == "68pt" and len(points) != 68:
        raise MaskError(f"schema '68pt' requires 68 points, got {len(points)}")
    lm = LandmarkSet(np.asarray(points, dtype=np.float64), schema)
    if image_dims is not None:
        h, w = image_dims
        for i, (x, y) in enumerate(lm.points):
            if not (0 <= x < w and 0 <= y < h):
                raise MaskError(f"landmark {i} ({x}, {y}) outside image bounds {w}x{h}")
    return lm


def face_rect(lm: LandmarkSet, margin: float, image_dims: tuple[int, int]) -> FaceRect:
    """Bounding box of the landmarks, expanded by margin*box-size per side.

    image_dims is (height, width). The box is made integer with floor/ceil
    plus one pixel so that every landmark is strictly inside, then clamped.
    """
    h, w = image_dims
    xs, ys = lm.points[:, 0], lm.points[:, 1]
    bw = xs.max() - xs.min()
    bh = ys.max() - ys.min()
    x0 = xs.min() - margin * bw
    x1 = xs.max() + margin * bw
    y0 = ys.min() - margin * bh
    y1 = ys.max() + margin * bh
    rx0 = max(0, int(math.floor(x0)))
    ry0 = max(0, int(math.floor(y0)))
    rx1 = min(w, int(math.floor(x1)) + 1)
    ry1 = min(h, int(math.floor(y1)) + 1)
    if rx0 >= rx1 or ry0 >= ry1:
        raise MaskError("degenerate face rectangle after rounding/clamping")
    return FaceRect(rx0, ry0, rx1, ry1)


def apply_face_mask(img: Image, rect: FaceRect) -> Image:
    if rect.x1 > img.width or rect.y1 > img.height:
        raise MaskError("rectangle outside image bounds")
    out = np.zeros_like(img.pixels)
    out[rect.y0 : rect.y1, rect.x0 : rect.x1, :] = img.pixels[
        rect.y0 : rect.y1, rect.x0 : rect.x1, :
    ]
    return Image(out)


def build_blend_mask(rect: FaceRect, dims: tuple[int, int], feather: int = 0) -> BlendMask:
    """Weight 1 inside the rectangle, 0 outside, linear ramp of `feather`
    pixels just inside the border."""
    h, w = dims
    if rect.x1 > w or rect.y1 > h:
        raise MaskError("rectangle outside mask dims")
    if feather < 0:
        raise MaskError("feather must be >= 0")
    if feather > 0 and 2 * feather >= min(rect.width, rect.height):
        raise MaskError("feather too large for rectangle")
    weights = np.zeros((h, w), dtype=np.float64)
    if feather == 0:
        weights[rect.y0 : rect.y1, rect.x0 : rect.x1] = 1.0
        return BlendMask(weights)
    yy, xx = np.mgrid[0:h, 0:w]
    # distance (in pixels) from the rectangle border, counted inward; the
    # first interior pixel has distance 1
    dist = np.minimum.reduce(
        [yy - rect.y0 + 1, rect.y1 - yy, xx - rect.x0 + 1, rect.x1 - xx]
    )
    inside = dist >= 1
    weights[inside] = np.minimum(dist[inside] / (feather + 1.0), 1.0)
    return BlendMask(weights)


def resize_bilinear(img: Image, out_h: int, out_w: int) -> Image:
    """Bilinear resize with pixel-center alignment."""
    if out_h < 1 or out_w < 1:
        raise MaskError("output dims must be positive")
    h, w, c = img.pixels.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    out = _sample_bilinear(img.pixels, *np.meshgrid(xs, ys))
    return Image(out)


def _sample_bilinear(px: np.ndarray, xg: np.ndarray, yg: np.ndarray) -> np.ndarray:
    """Sample px at float coordinate grids, clamping at the borders."""
    h, w, _ = px.shape
    x0 = np.clip(np.floor(xg).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(yg).astype(int), 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    fx = np.clip(xg - x0, 0.0, 1.0)[:, :, None]
    fy = np.clip(yg - y0, 0.0, 1.0)[:, :, None]
    top = px[y0, x0] * (1 - fx) + px[y0, x1] * fx
    bot = px[y1, x0] * (1 - fx) + px[y1, x1] * fx
    return top * (1 - fy) + bot * fy


# ---------------------------------------------------------------------------
# Similarity alignment over three anchor points

# iBUG 68-point indexing
_LEFT_EYE = slice(36, 42)
_RIGHT_EYE = slice(42, 48)
_MOUTH = slice(48, 68)


@dataclass(frozen=True)
class SimilarityTransform:
    """x' = scale * R(angle) x + translation, applied to (x, y) columns."""

    scale: float
    angle: float
    tx: float
    ty: float

    def matrix(self) -> np.ndarray:
        c = self.scale * math.cos(self.angle)
        s = self.scale * math.sin(self.angle)
        return np.array([[c, -s, self.tx], [s, c, self.ty]])

    def apply(self, pts: np.ndarray) -> np.ndarray:
        m = self.matrix()
        return pts @ m[:, :2].T + m[:, 2]

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        ang = -self.angle
        c = inv_scale * math.cos(ang)
        s = inv_scale * math.sin(ang)
        return SimilarityTransform(
            inv_scale, ang, -(c * self.tx - s * self.ty), -(s * self.tx + c * self.ty)
        )


def anchor_points(lm: LandmarkSet) -> np.ndarray:
    """Left-eye, right-eye, mouth anchors as a (3, 2) array."""
    if lm.schema == "68pt":
        return np.stack(
            [
                lm.points[_LEFT_EYE].mean(axis=0),
                lm.points[_RIGHT_EYE].mean(axis=0),
                lm.points[_MOUTH].mean(axis=0),
            ]
        )
    if lm.points.shape[0] == 3:
        return lm.points.copy()
    raise MaskError("generic schema needs exactly 3 anchor points for alignment")


def solve_similarity(src: np.ndarray, dst: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity transform mapping src points onto dst.

    Uses the complex-number formulation: minimize sum |a*p + b - q|^2 over
    complex a, b with p = x + iy.
    """
    p = src[:, 0] + 1j * src[:, 1]
    q = dst[:, 0] + 1j * dst[:, 1]
    pm, qm = p.mean(), q.mean()
    pc, qc = p - pm, q - qm
    denom = np.vdot(pc, pc).real
    if denom < 1e-12 or np.abs(np.vdot(pc, qc)) < 1e-12:
        raise MaskError("degenerate anchors: coincident or collinear with zero span")
    a = np.vdot(pc, qc) / denom  # vdot conjugates the first argument
    b = qm - a * pm
    return SimilarityTransform(abs(a), math.atan2(a.imag, a.real), b.real, b.imag)


def align_face(
    img: Image,
    lm: LandmarkSet,
    template: np.ndarray,
    out_size: tuple[int, int],
) -> tuple[Image, SimilarityTransform]:
    """Warp img so its anchors land on the template points.

    template is (3, 2) target coordinates in the output frame; out_size is
    (height, width). Returns the warped image and the forward transform for
    inverse mapping at merge time.
    """
    anchors = anchor_points(lm)
    if np.linalg.matrix_rank(anchors - anchors.mean(axis=0)) < 2:
        raise MaskError("degenerate anchors: collinear")
    tf = solve_similarity(anchors, np.asarray(template, dtype=np.float64))
    inv = tf.inverse()
    out_h, out_w = out_size
    yy, xx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src = inv.apply(np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1))
    xg = src[:, 0].reshape(out_h, out_w)
    yg = src[:, 1].reshape(out_h, out_w)
    return Image(_sample_bilinear(img.pixels, xg, yg)), tf
