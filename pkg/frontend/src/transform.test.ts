import { describe, expect, it } from "vitest";
import { ViewTransform } from "./transform.js";

describe("ViewTransform", () => {
  it("round-trips world and screen coordinates", () => {
    const view = new ViewTransform(960, 360, 3.6);
    for (const [wx, wy] of [[0, 0], [-3, 0.5], [2.7, 1.8]] as const) {
      const [sx, sy] = view.toScreen(wx, wy);
      const [bx, by] = view.toWorld(sx, sy);
      expect(bx).toBeCloseTo(wx, 10);
      expect(by).toBeCloseTo(wy, 10);
    }
  });

  it("keeps the arena centered and y pointing up", () => {
    const view = new ViewTransform(960, 360, 3.6);
    const [cx] = view.toScreen(0, 0);
    expect(cx).toBeCloseTo(480, 10);
    const [, yLow] = view.toScreen(0, 0);
    const [, yHigh] = view.toScreen(0, 1);
    expect(yHigh).toBeLessThan(yLow);
  });

  it("fits the whole arena width inside the canvas", () => {
    const view = new ViewTransform(960, 360, 3.6);
    const [left] = view.toScreen(-3.6, 0);
    const [right] = view.toScreen(3.6, 0);
    expect(left).toBeGreaterThanOrEqual(-1e-9); // float roundoff at the edge
    expect(right).toBeLessThanOrEqual(960 + 1e-9);
  });
});
