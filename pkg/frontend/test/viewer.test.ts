import { describe, expect, it } from "vitest";

import { projectVertices, OrbitViewer } from "../src/viewer.js";
import type { ParsedMesh } from "../src/glb.js";

function cubeMesh(): ParsedMesh {
  const positions = new Float32Array([
    0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0,
    0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1,
  ]);
  const indices = Uint32Array.from([
    0, 2, 1, 0, 3, 2, 4, 5, 6, 4, 6, 7,
    0, 1, 5, 0, 5, 4, 2, 3, 7, 2, 7, 6,
    0, 4, 7, 0, 7, 3, 1, 2, 6, 1, 6, 5,
  ]);
  return {
    positions,
    indices,
    vertexCount: 8,
    triangleCount: 12,
    boundsMin: [0, 0, 0],
    boundsMax: [1, 1, 1],
  };
}

describe("projectVertices", () => {
  it("maps the model center to the canvas center", () => {
    const pts = projectVertices(
      new Float32Array([0, 0, 0, 2, 2, 2, 1, 1, 1]),
      { yaw: 0.4, pitch: 0.3, zoom: 1 },
      200,
      100,
    );
    // third vertex (1,1,1) is the bounds midpoint
    expect(pts[4]).toBeCloseTo(100, 6);
    expect(pts[5]).toBeCloseTo(50, 6);
  });

  it("keeps every projected vertex finite and on-canvas for a unit cube", () => {
    const mesh = cubeMesh();
    const pts = projectVertices(mesh.positions, { yaw: 0.8, pitch: -0.4, zoom: 1 }, 300, 300);
    expect(pts).toHaveLength(16);
    for (let i = 0; i < pts.length; i += 2) {
      expect(Number.isFinite(pts[i])).toBe(true);
      expect(Number.isFinite(pts[i + 1])).toBe(true);
      expect(pts[i]).toBeGreaterThan(0);
      expect(pts[i]).toBeLessThan(300);
    }
  });

  it("yaw rotation moves projected points", () => {
    const mesh = cubeMesh();
    const a = projectVertices(mesh.positions, { yaw: 0, pitch: 0, zoom: 1 }, 300, 300);
    const b = projectVertices(mesh.positions, { yaw: 0.5, pitch: 0, zoom: 1 }, 300, 300);
    expect(Array.from(a)).not.toEqual(Array.from(b));
  });
});

describe("OrbitViewer", () => {
  it("renders one stroke pass over the wireframe", () => {
    const mesh = cubeMesh();
    const viewer = new OrbitViewer(mesh, 300, 300);
    const ops: string[] = [];
    const ctx = {
      strokeStyle: "",
      lineWidth: 0,
      clearRect: () => ops.push("clear"),
      beginPath: () => ops.push("begin"),
      moveTo: () => ops.push("move"),
      lineTo: () => ops.push("line"),
      stroke: () => ops.push("stroke"),
    };
    viewer.render(ctx as never);
    expect(ops[0]).toBe("clear");
    expect(ops.filter((o) => o === "move")).toHaveLength(18); // unique cube edges
    expect(ops.at(-1)).toBe("stroke");
  });

  it("dragging updates the camera and clamps pitch", () => {
    const viewer = new OrbitViewer(cubeMesh(), 300, 300);
    const before = { ...viewer.cam };
    viewer.pointerDown(10, 10);
    expect(viewer.pointerMove(30, 20)).toBe(true);
    expect(viewer.cam.yaw).not.toBe(before.yaw);
    viewer.pointerMove(30, 100000);
    expect(viewer.cam.pitch).toBeLessThanOrEqual(1.5);
    viewer.pointerUp();
    expect(viewer.pointerMove(0, 0)).toBe(false);
  });
});
