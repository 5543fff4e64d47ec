"""Pluggable differentiable models: forward evaluation plus vector-Jacobian
products, with seeded deterministic toy implementations.

Toy weights come from a fixed 64-bit linear congruential generator so that
any language can reproduce them bit-for-bit in float32:

    state_{k+1} = (state_k * 6364136223846793005 + 1442695040888963407) mod 2^64
    u_k = top 24 bits of state_{k+1}, divided by 2^24        (exact in f32)
    w_k = float32((2*u_k - 1) / sqrt(fan_in))

The draw order is W1 row-major, b1, W2 row-major, b2, starting from
state_0 = seed. Biases use fan_in = 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .imagecore import Image

LCG_MULT = 6364136223846793005
LCG_INC = 1442695040888963407
LCG_MASK = (1 << 64) - 1


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class LatentVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ModelError("latent vector has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    role: str = "perceptual"  # "perceptual" or "identity"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ModelError("feature vector has non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ModelSpec:
    role: str  # "generator" | "perceptual" | "identity"
    input_shape: tuple[int, ...]  # (latent_dim,) for generators, (h, w, c) otherwise
    output_shape: tuple[int, ...]  # (h, w, c) for generators, (feature_dim,) otherwise
    seed: int = 0
    hidden_dim: int = 32

    def __post_init__(self):
        if self.role not in ("generator", "perceptual", "identity"):
            raise ModelError(f"unknown role {self.role!r}")
        if self.role == "generator":
            if len(self.input_shape) != 1 or len(self.output_shape) != 3:
                raise ModelError("generator spec needs input (d,) and output (h, w, c)")
        else:
            if len(self.input_shape) != 3 or len(self.output_shape) != 1:
                raise ModelError("extractor spec needs input (h, w, c) and output (d,)")
        if self.hidden_dim < 1:
            raise ModelError("hidden_dim must be >= 1")
        object.__setattr__(self, "input_shape", tuple(int(x) for x in self.input_shape))
        object.__setattr__(self, "output_shape", tuple(int(x) for x in self.output_shape))

    @property
    def latent_dim(self) -> int:
        if self.role != "generator":
            raise ModelError("latent_dim only defined for generators")
        return self.input_shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "role": self.role,
                "input_shape": list(self.input_shape),
                "output_shape": list(self.output_shape),
                "seed": self.seed,
                "hidden_dim": self.hidden_dim,
            }
        )

    @staticmethod
    def from_json(text: str) -> "ModelSpec":
        try:
            doc = json.loads(text)
            return ModelSpec(
                role=doc["role"],
                input_shape=tuple(doc["input_shape"]),
                output_shape=tuple(doc["output_shape"]),
                seed=int(doc.get("seed", 0)),
                hidden_dim=int(doc.get("hidden_dim", 32)),
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ModelError(f"malformed model spec: {e}") from e


class LcgStream:
    """The documented 64-bit LCG; yields f32 uniforms in [0, 1)."""

    def __init__(self, seed: int):
        self.state = seed & LCG_MASK

    def next_uniform(self) -> float:
        self.state = (self.state * LCG_MULT + LCG_INC) & LCG_MASK
        return (self.state >> 40) / float(1 << 24)

    def weights(self, n: int, fan_in: int) -> np.ndarray:
        scale = 1.0 / np.sqrt(float(fan_in))
        out = np.empty(n, dtype=np.float32)
        for i in range(n):
            out[i] = np.float32((2.0 * self.next_uniform() - 1.0) * scale)
        return out


@dataclass(frozen=True)
class ToyModel:
    """Two affine layers with tanh between; generators squash the output
    through a sigmoid, extractors leave it linear. Immutable and pure."""

    spec: ModelSpec
    w1: np.ndarray = field(repr=False)  # (hidden, in)
    b1: np.ndarray = field(repr=False)
    w2: np.ndarray = field(repr=False)  # (out, hidden)
    b2: np.ndarray = field(repr=False)

    # -- forward -----------------------------------------------------------

    def _in_dim(self) -> int:
        return int(np.prod(self.spec.input_shape))

    def _forward_flat(self, x: np.ndarray) -> np.ndarray:
        h = np.tanh(self.w1 @ x + self.b1)
        y = self.w2 @ h + self.b2
        if self.spec.role == "generator":
            y = 1.0 / (1.0 + np.exp(-y))
        return y

    def _vjp_flat(self, x: np.ndarray, cot: np.ndarray) -> np.ndarray:
        pre1 = self.w1 @ x + self.b1
        h = np.tanh(pre1)
        if self.spec.role == "generator":
            y = 1.0 / (1.0 + np.exp(-(self.w2 @ h + self.b2)))
            cot = cot * y * (1.0 - y)
        g_h = self.w2.T @ cot
        g_pre1 = g_h * (1.0 - h * h)
        return self.w1.T @ g_pre1

    # -- generator surface -------------------------------------------------

    def generator_forward(self, z: LatentVector) -> Image:
        if self.spec.role != "generator":
            raise ModelError("not a generator")
        if z.dim != self.spec.latent_dim:
            raise ModelError(f"latent dim {z.dim} != declared {self.spec.latent_dim}")
        y = self._forward_flat(z.values)
        return Image(y.reshape(self.spec.output_shape))

    def generator_vjp(self, z: LatentVector, cotangent: np.ndarray) -> np.ndarray:
        if self.spec.role != "generator":
            raise ModelError("not a generator")
        cot = np.asarray(cotangent, dtype=np.float64)
        if cot.shape != self.spec.output_shape and cot.size != np.prod(self.spec.output_shape):
            raise ModelError(f"cotangent shape {cot.shape} != output {self.spec.output_shape}")
        return self._vjp_flat(z.values, cot.reshape(-1))

    # -- extractor surface -------------------------------------------------

    def extractor_forward(self, img: Image) -> FeatureVector:
        if self.spec.role == "generator":
            raise ModelError("not an extractor")
        if img.pixels.shape != self.spec.input_shape:
            raise ModelError(
                f"image shape {img.pixels.shape} != spec input {self.spec.input_shape}"
            )
        return FeatureVector(self._forward_flat(img.pixels.reshape(-1)), role=self.spec.role)

    def extractor_vjp(self, img: Image, cotangent: np.ndarray) -> np.ndarray:
        if self.spec.role == "generator":
            raise ModelError("not an extractor")
        if img.pixels.shape != self.spec.input_shape:
            raise ModelError("image shape mismatch")
        cot = np.asarray(cotangent, dtype=np.float64).reshape(-1)
        if cot.shape[0] != self.spec.output_shape[0]:
            raise ModelError("cotangent length mismatch")
        return self._vjp_flat(img.pixels.reshape(-1), cot).reshape(self.spec.input_shape)

    # -- generic surface (for wire serving and finite differences) ---------

    def forward_flat(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self._in_dim():
            raise ModelError(f"input length {x.shape[0]} != {self._in_dim()}")
        return self._forward_flat(x)

    def vjp_flat(self, x: np.ndarray, cot: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        cot = np.asarray(cot, dtype=np.float64).reshape(-1)
        if x.shape[0] != self._in_dim():
            raise ModelError("input length mismatch")
        if cot.shape[0] != int(np.prod(self.spec.output_shape)):
            raise ModelError("cotangent length mismatch")
        return self._vjp_flat(x, cot)


def make_toy_model(spec: ModelSpec) -> ToyModel:
    in_dim = int(np.prod(spec.input_shape))
    out_dim = int(np.prod(spec.output_shape))
    hid = spec.hidden_dim
    stream = LcgStream(spec.seed)
    w1 = stream.weights(hid * in_dim, fan_in=in_dim).reshape(hid, in_dim).astype(np.float64)
    b1 = stream.weights(hid, fan_in=1).astype(np.float64)
    w2 = stream.weights(out_dim * hid, fan_in=hid).reshape(out_dim, hid).astype(np.float64)
    b2 = stream.weights(out_dim, fan_in=1).astype(np.float64)
    return ToyModel(spec=spec, w1=w1, b1=b1, w2=w2, b2=b2)
