/**
 * Deterministic toy models mirroring the primary engine's in-process models.
 *
 * Weights come from a fixed 64-bit linear congruential generator so that any
 * language reproduces them bit-for-bit in float32:
 *
 *     state_{k+1} = (state_k * 6364136223846793005 + 1442695040888963407) mod 2^64
 *     u_k = top 24 bits of state_{k+1}, divided by 2^24   (exact in f32)
 *     w_k = float32((2*u_k - 1) / sqrt(fan_in))
 *
 * Draw order: W1 row-major, b1, W2 row-major, b2, from state_0 = seed.
 * Biases use fan_in = 1. Two affine layers with tanh between; generators
 * squash the output through a sigmoid, extractors leave it linear.
 */

const LCG_MULT = 6364136223846793005n;
const LCG_INC = 1442695040888963407n;
const LCG_MASK = (1n << 64n) - 1n;

export type Role = "generator" | "perceptual" | "identity";

export interface ModelSpec {
  role: Role;
  input_shape: number[];
  output_shape: number[];
  seed: number;
  hidden_dim: number;
}

export function specToJson(spec: ModelSpec): string {
  return JSON.stringify({
    role: spec.role,
    input_shape: spec.input_shape,
    output_shape: spec.output_shape,
    seed: spec.seed,
    hidden_dim: spec.hidden_dim,
  });
}

export class LcgStream {
  state: bigint;

  constructor(seed: number | bigint) {
    this.state = BigInt(seed) & LCG_MASK;
  }

  nextUniform(): number {
    this.state = (this.state * LCG_MULT + LCG_INC) & LCG_MASK;
    return Number(this.state >> 40n) / 16777216;
  }

  weights(n: number, fanIn: number): Float32Array {
    const scale = 1 / Math.sqrt(fanIn);
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      out[i] = Math.fround((2 * this.nextUniform() - 1) * scale);
    }
    return out;
  }
}

function prod(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export class ToyModel {
  readonly spec: ModelSpec;
  readonly inDim: number;
  readonly outDim: number;
  private readonly w1: Float64Array; // (hidden, in) row-major
  private readonly b1: Float64Array;
  private readonly w2: Float64Array; // (out, hidden) row-major
  private readonly b2: Float64Array;

  constructor(spec: ModelSpec) {
    this.spec = spec;
    this.inDim = prod(spec.input_shape);
    this.outDim = prod(spec.output_shape);
    const hid = spec.hidden_dim;
    const stream = new LcgStream(spec.seed);
    this.w1 = Float64Array.from(stream.weights(hid * this.inDim, this.inDim));
    this.b1 = Float64Array.from(stream.weights(hid, 1));
    this.w2 = Float64Array.from(stream.weights(this.outDim * hid, hid));
    this.b2 = Float64Array.from(stream.weights(this.outDim, 1));
  }

  private hidden(x: ArrayLike<number>): Float64Array {
    const hid = this.spec.hidden_dim;
    const h = new Float64Array(hid);
    for (let i = 0; i < hid; i++) {
      let acc = this.b1[i];
      for (let j = 0; j < this.inDim; j++) acc += this.w1[i * this.inDim + j] * x[j];
      h[i] = Math.tanh(acc);
    }
    return h;
  }

  forward(x: ArrayLike<number>): Float64Array {
    if (x.length !== this.inDim) {
      throw new Error(`expected input of ${this.inDim} values, got ${x.length}`);
    }
    const hid = this.spec.hidden_dim;
    const h = this.hidden(x);
    const y = new Float64Array(this.outDim);
    for (let k = 0; k < this.outDim; k++) {
      let acc = this.b2[k];
      for (let i = 0; i < hid; i++) acc += this.w2[k * hid + i] * h[i];
      y[k] = this.spec.role === "generator" ? 1 / (1 + Math.exp(-acc)) : acc;
    }
    return y;
  }

  vjp(x: ArrayLike<number>, cot: ArrayLike<number>): Float64Array {
    if (x.length !== this.inDim) {
      throw new Error(`expected input of ${this.inDim} values, got ${x.length}`);
    }
    if (cot.length !== this.outDim) {
      throw new Error(`expected cotangent of ${this.outDim} values, got ${cot.length}`);
    }
    const hid = this.spec.hidden_dim;
    const h = this.hidden(x);
    const cotOut = new Float64Array(this.outDim);
    if (this.spec.role === "generator") {
      for (let k = 0; k < this.outDim; k++) {
        let acc = this.b2[k];
        for (let i = 0; i < hid; i++) acc += this.w2[k * hid + i] * h[i];
        const y = 1 / (1 + Math.exp(-acc));
        cotOut[k] = cot[k] * y * (1 - y);
      }
    } else {
      for (let k = 0; k < this.outDim; k++) cotOut[k] = cot[k];
    }
    const gPre1 = new Float64Array(hid);
    for (let i = 0; i < hid; i++) {
      let gh = 0;
      for (let k = 0; k < this.outDim; k++) gh += this.w2[k * hid + i] * cotOut[k];
      gPre1[i] = gh * (1 - h[i] * h[i]);
    }
    const gx = new Float64Array(this.inDim);
    for (let j = 0; j < this.inDim; j++) {
      let acc = 0;
      for (let i = 0; i < hid; i++) acc += this.w1[i * this.inDim + j] * gPre1[i];
      gx[j] = acc;
    }
    return gx;
  }
}
