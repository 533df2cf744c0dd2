import { describe, expect, it } from "vitest";

import { MERGE_DISTANCE_PX, StrokeBuffer, shoelaceArea } from "../src/stroke.js";

describe("StrokeBuffer", () => {
  it("keeps every distinct point", () => {
    const buf = new StrokeBuffer();
    expect(buf.add(0, 0)).toBe(true);
    expect(buf.add(10, 0)).toBe(true);
    expect(buf.add(10, 10)).toBe(true);
    expect(buf.points).toHaveLength(3);
  });

  it("merges consecutive points closer than the threshold", () => {
    const buf = new StrokeBuffer();
    buf.add(5, 5);
    expect(buf.add(5 + MERGE_DISTANCE_PX * 0.9, 5)).toBe(false);
    expect(buf.add(5 + MERGE_DISTANCE_PX * 1.1, 5)).toBe(true);
    expect(buf.points).toHaveLength(2);
  });

  it("computes the square area", () => {
    const buf = new StrokeBuffer();
    for (const [x, y] of [
      [0, 0],
      [10, 0],
      [10, 10],
      [0, 10],
    ]) {
      buf.add(x, y);
    }
    expect(buf.area()).toBe(100);
  });

  it("matches the server's shoelace value on a frozen polygon", () => {
    // the same vertex list fed through the server library yields 48979.6875
    const pts = [
      { x: 12.5, y: 7.25 },
      { x: 200.75, y: 15.5 },
      { x: 310.0, y: 180.25 },
      { x: 150.5, y: 260.0 },
      { x: 20.0, y: 140.75 },
    ];
    const serverArea = 48979.6875;
    expect(Math.abs(shoelaceArea(pts) - serverArea)).toBeLessThanOrEqual(1.0);
    expect(shoelaceArea(pts)).toBeCloseTo(serverArea, 9);
  });

  it("returns zero area below three points", () => {
    expect(shoelaceArea([{ x: 1, y: 1 }])).toBe(0);
    expect(
      shoelaceArea([
        { x: 1, y: 1 },
        { x: 2, y: 2 },
      ]),
    ).toBe(0);
  });
});
