import { describe, expect, it } from "vitest";
import { LcgStream, ToyModel, type ModelSpec } from "../dist/model.js";

const GEN_SPEC: ModelSpec = {
  role: "generator",
  input_shape: [6],
  output_shape: [4, 4, 1],
  seed: 77,
  hidden_dim: 32,
};

function linspace(a: number, b: number, n: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = Math.fround(a + ((b - a) * i) / (n - 1));
  return out;
}

describe("LcgStream", () => {
  it("advances seed 0 to the increment constant", () => {
    const s = new LcgStream(0);
    s.nextUniform();
    expect(s.state).toBe(1442695040888963407n);
  });

  it("reproduces the primary engine's first weights bit-exactly", () => {
    // frozen from the same seed/fan_in in the primary implementation
    const expected = [
      0.11696181446313858, -0.0038642561994493008, 0.3421943485736847,
      0.3984908163547516, -0.33156609535217285, 0.3380594849586487,
      0.1148289293050766, 0.39424651861190796,
    ];
    const got = new LcgStream(77).weights(8, 6);
    for (let i = 0; i < expected.length; i++) expect(got[i]).toBe(expected[i]);
  });

  it("uniforms are exactly representable in f32 and in [0, 1)", () => {
    const s = new LcgStream(123);
    for (let i = 0; i < 1000; i++) {
      const u = s.nextUniform();
      expect(u).toBeGreaterThanOrEqual(0);
      expect(u).toBeLessThan(1);
      expect(Math.fround(u)).toBe(u);
    }
  });
});

describe("ToyModel", () => {
  it("matches the primary engine's generator forward to 1e-12", () => {
    // frozen dual-path values from the primary implementation, seed 77
    const expected = [
      0.37571617617765724, 0.3370306958811619, 0.3286216300933899,
      0.5418086759089584, 0.7051107730701769, 0.7010440055808822,
      0.7086972135214656, 0.44498047663352713, 0.36232429732285765,
      0.36796465860795713, 0.6966040276914813, 0.7237345688269008,
      0.3354835026784227, 0.4784054919062105, 0.47449524772438767,
      0.7191128219188518,
    ];
    const got = new ToyModel(GEN_SPEC).forward(linspace(-1, 1, 6));
    for (let i = 0; i < 16; i++) expect(Math.abs(got[i] - expected[i])).toBeLessThan(1e-12);
  });

  it("matches the primary engine's generator vjp to 1e-12", () => {
    const expected = [
      0.016589289012220714, -0.011604209641126621, -0.018055738595127685,
      -0.00581099065012667, 0.021114079113075432, 0.05418506667982248,
    ];
    const cot = new Float64Array(16);
    for (let i = 0; i < 16; i++) cot[i] = Math.fround(i / 8 - 1);
    const got = new ToyModel(GEN_SPEC).vjp(linspace(-1, 1, 6), cot);
    for (let i = 0; i < 6; i++) expect(Math.abs(got[i] - expected[i])).toBeLessThan(1e-12);
  });

  it("matches the primary engine's extractor forward to 1e-12", () => {
    const spec: ModelSpec = {
      role: "identity",
      input_shape: [4, 4, 1],
      output_shape: [6],
      seed: 78,
      hidden_dim: 32,
    };
    const expected = [
      -0.28771015004787254, 0.636951516026571, -0.31014182158653153,
      0.18522241702687486, -0.6562900676177421, -1.1786655859632298,
    ];
    const x = new Float64Array(16);
    for (let i = 0; i < 16; i++) x[i] = Math.fround(i / 16);
    const got = new ToyModel(spec).forward(x);
    for (let i = 0; i < 6; i++) expect(Math.abs(got[i] - expected[i])).toBeLessThan(1e-12);
  });

  it("vjp agrees with central finite differences", () => {
    const model = new ToyModel(GEN_SPEC);
    const z = linspace(-0.5, 0.8, 6);
    const cot = new Float64Array(16).fill(0.3);
    const analytic = model.vjp(z, cot);
    const h = 1e-6;
    for (let k = 0; k < 6; k++) {
      const zp = Float64Array.from(z);
      const zm = Float64Array.from(z);
      zp[k] += h;
      zm[k] -= h;
      const yp = model.forward(zp);
      const ym = model.forward(zm);
      let fd = 0;
      for (let i = 0; i < 16; i++) fd += (cot[i] * (yp[i] - ym[i])) / (2 * h);
      expect(Math.abs(analytic[k] - fd)).toBeLessThan(1e-7);
    }
  });

  it("rejects wrong input length with a counting message", () => {
    expect(() => new ToyModel(GEN_SPEC).forward(new Float64Array(5))).toThrow(
      "expected input of 6 values, got 5",
    );
  });

  it("two models with the same seed are identical", () => {
    const a = new ToyModel(GEN_SPEC).forward(linspace(-1, 1, 6));
    const b = new ToyModel({ ...GEN_SPEC }).forward(linspace(-1, 1, 6));
    expect(Array.from(a)).toEqual(Array.from(b));
  });
});
