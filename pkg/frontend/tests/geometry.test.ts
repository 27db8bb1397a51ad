import { describe, expect, it } from "vitest";

import {
  clamp01,
  normalizedToCanvas,
  spanToCanvas,
  worldToCanvas,
} from "../src/geometry.js";

const ws = { x_range: [0, 1], y_range: [0, 1], z_range: [0, 0.3] };
const vp = { width: 640, height: 640, margin: 40 };

describe("geometry", () => {
  it("maps workspace corners to the drawable area", () => {
    expect(worldToCanvas(0, 0, ws, vp)).toEqual({ cx: 40, cy: 600 });
    expect(worldToCanvas(1, 1, ws, vp)).toEqual({ cx: 600, cy: 40 });
  });

  it("maps the center to the canvas center", () => {
    const { cx, cy } = worldToCanvas(0.5, 0.5, ws, vp);
    expect(cx).toBeCloseTo(320);
    expect(cy).toBeCloseTo(320);
  });

  it("flips the y axis (world up is canvas up)", () => {
    const low = worldToCanvas(0.5, 0.2, ws, vp);
    const high = worldToCanvas(0.5, 0.8, ws, vp);
    expect(high.cy).toBeLessThan(low.cy);
  });

  it("scales spans without translating", () => {
    const { w, h } = spanToCanvas(0.1, 0.25, ws, vp);
    expect(w).toBeCloseTo(56);
    expect(h).toBeCloseTo(140);
  });

  it("normalized overlay coordinates agree with world mapping", () => {
    const a = normalizedToCanvas(0.3, 0.7, vp);
    const b = worldToCanvas(0.3, 0.7, ws, vp);
    expect(a.cx).toBeCloseTo(b.cx);
    expect(a.cy).toBeCloseTo(b.cy);
  });

  it("clamps to the unit interval", () => {
    expect(clamp01(-0.5)).toBe(0);
    expect(clamp01(0.25)).toBe(0.25);
    expect(clamp01(7)).toBe(1);
  });
});
