"""Perceptual and de-identification losses over extractor features, and the
fixed-step gradient descent over the latent vector.

L_per is the Euclidean distance between perceptual features of the target
and the generated image; L_did is the negated distance between identity
features; the total is the weighted sum. The norm is smoothed as
sqrt(||d||^2 + eps^2) so the gradient exists at zero distance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .diffmodel import FeatureVector, LatentVector, ToyModel
from .imagecore import Image

NORM_EPS = 1e-8


class OptError(Exception):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_per: float = 1.0 / 8800.0
    lambda_did: float = 1.0 / 12.0

    def __post_init__(self):
        if self.lambda_per < 0 or self.lambda_did < 0:
            raise OptError("loss weights must be >= 0")
        if self.lambda_per == 0 and self.lambda_did == 0:
            raise OptError("at least one loss weight must be positive")


@dataclass(frozen=True)
class OptConfig:
    iterations: int = 800
    learning_rate: float = 1.0
    init: str = "normal"  # "normal" | "zero"
    seed: int = 0
    warm_start_iters: int = 0  # leading iterations run with lambda_did = 0
    record_trace: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise OptError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise OptError("learning_rate must be > 0")
        if self.init not in ("normal", "zero"):
            raise OptError(f"unknown init strategy {self.init!r}")


@dataclass(frozen=True)
class OptResult:
    latent: LatentVector
    image: Image
    trace: list[tuple[float, float, float]]  # (l_per, l_did, l_final) per iteration
    iterations: int
    best_iteration: int


@dataclass(frozen=True)
class ModelBundle:
    """Generator plus the two feature extractors the losses chain through.

    Extractors whose input shape differs from the generator output are not
    supported here; resampling is the caller's job.
    """

    generator: ToyModel
    perceptual: ToyModel
    identity: ToyModel

    def __post_init__(self):
        out = self.generator.spec.output_shape
        for m in (self.perceptual, self.identity):
            if m.spec.input_shape != out:
                raise OptError(
                    f"extractor input {m.spec.input_shape} != generator output {out}"
                )


def _smoothed_norm(diff: np.ndarray) -> float:
    return float(np.sqrt(np.dot(diff, diff) + NORM_EPS * NORM_EPS))


def perceptual_loss(f_x: FeatureVector, f_xp: FeatureVector) -> float:
    """Euclidean distance between perceptual features (batch of one)."""
    if f_x.dim != f_xp.dim:
        raise OptError(f"feature length mismatch: {f_x.dim} vs {f_xp.dim}")
    return float(np.linalg.norm(f_x.values - f_xp.values))


def deident_loss(f_x: FeatureVector, f_xp: FeatureVector) -> float:
    """Negated Euclidean distance between identity features."""
    if f_x.dim != f_xp.dim:
        raise OptError(f"feature length mismatch: {f_x.dim} vs {f_xp.dim}")
    return -float(np.linalg.norm(f_x.values - f_xp.values))


def total_loss(lper: float, ldid: float, w: LossWeights) -> float:
    return w.lambda_per * lper + w.lambda_did * ldid


def _losses_at(z: LatentVector, target: Image, models: ModelBundle):
    img = models.generator.generator_forward(z)
    f_per_t = models.perceptual.extractor_forward(target)
    f_per_g = models.perceptual.extractor_forward(img)
    f_id_t = models.identity.extractor_forward(target)
    f_id_g = models.identity.extractor_forward(img)
    lper = _smoothed_norm(f_per_t.values - f_per_g.values)
    ldid = -_smoothed_norm(f_id_t.values - f_id_g.values)
    return img, lper, ldid


def loss_gradient(
    z: LatentVector, target: Image, models: ModelBundle, w: LossWeights
) -> np.ndarray:
    """d(total loss)/dz via the VJP chain through both extractors and the
    generator."""
    img = models.generator.generator_forward(z)
    g_img = np.zeros(img.pixels.shape, dtype=np.float64)
    if w.lambda_per != 0.0:
        f_t = models.perceptual.extractor_forward(target).values
        f_g = models.perceptual.extractor_forward(img).values
        diff = f_g - f_t
        cot = diff / _smoothed_norm(diff)  # d L_per / d f_g
        g_img += w.lambda_per * models.perceptual.extractor_vjp(img, cot)
    if w.lambda_did != 0.0:
        f_t = models.identity.extractor_forward(target).values
        f_g = models.identity.extractor_forward(img).values
        diff = f_g - f_t
        cot = -diff / _smoothed_norm(diff)  # d L_did / d f_g
        g_img += w.lambda_did * models.identity.extractor_vjp(img, cot)
    return models.generator.generator_vjp(z, g_img)


def total_loss_at(z: LatentVector, target: Image, models: ModelBundle, w: LossWeights) -> float:
    _, lper, ldid = _losses_at(z, target, models)
    return total_loss(lper, ldid, w)


def init_latent(cfg: OptConfig, dim: int) -> LatentVector:
    if cfg.init == "zero":
        return LatentVector(np.zeros(dim))
    rng = np.random.default_rng(cfg.seed)
    return LatentVector(rng.standard_normal(dim))


def optimize(target: Image, models: ModelBundle, w: LossWeights, cfg: OptConfig) -> OptResult:
    """Plain fixed-step gradient descent z <- z - lr * grad, returning the
    best-by-final-loss iterate."""
    z = init_latent(cfg, models.generator.spec.latent_dim).values.copy()
    trace: list[tuple[float, float, float]] = []
    best_loss = np.inf
    best_iter = 0
    best_z = z.copy()
    warm_w = LossWeights(w.lambda_per, 0.0) if w.lambda_per > 0 else w
    for it in range(cfg.iterations):
        step_w = warm_w if it < cfg.warm_start_iters else w
        zv = LatentVector(z)
        _, lper, ldid = _losses_at(zv, target, models)
        lfin = total_loss(lper, ldid, w)
        if not np.isfinite(lfin):
            raise OptError(f"non-finite loss at iteration {it}; trace so far: {len(trace)}")
        trace.append((lper, ldid, lfin))
        if lfin < best_loss:
            best_loss = lfin
            best_iter = it
            best_z = z.copy()
        z = z - cfg.learning_rate * loss_gradient(zv, target, models, step_w)
    best = LatentVector(best_z)
    return OptResult(
        latent=best,
        image=models.generator.generator_forward(best),
        trace=trace if cfg.record_trace else [],
        iterations=cfg.iterations,
        best_iteration=best_iter,
    )


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "l_per", "l_did", "l_final"])
        for i, (lp, ld, lf) in enumerate(trace):
            writer.writerow([i, repr(lp), repr(ld), repr(lf)])
