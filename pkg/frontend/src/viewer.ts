/**
 * Dependency-free orbit preview: yaw/pitch rotation, a fixed-distance
 * camera and a wireframe drawn on a 2D canvas. Good enough to eyeball a
 * generated asset without pulling in a GL stack.
 */

import type { ParsedMesh } from "./glb.js";
import { wireframeEdges } from "./glb.js";

export interface Camera {
  yaw: number; // radians
  pitch: number;
  zoom: number; // screen pixels per model unit (before auto-fit)
}

/**
 * Rotate, perspective-project and center the mesh vertices.
 * Returns interleaved screen x,y pairs (Float32Array of length 2N).
 */
export function projectVertices(
  positions: Float32Array,
  cam: Camera,
  width: number,
  height: number,
): Float32Array {
  const n = positions.length / 3;
  const out = new Float32Array(n * 2);
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  // center on the bounds midpoint
  let mx = 0, my = 0, mz = 0;
  const mins = [Infinity, Infinity, Infinity];
  const maxs = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < positions.length; i += 3) {
    for (let k = 0; k < 3; k++) {
      mins[k] = Math.min(mins[k], positions[i + k]);
      maxs[k] = Math.max(maxs[k], positions[i + k]);
    }
  }
  mx = (mins[0] + maxs[0]) / 2;
  my = (mins[1] + maxs[1]) / 2;
  mz = (mins[2] + maxs[2]) / 2;
  // bounding-sphere radius, so no corner can leave the canvas even at the
  // nearest perspective amplification (dist / (dist - r) = 1.5)
  let radius = 0;
  for (let i = 0; i < positions.length; i += 3) {
    const d = Math.hypot(positions[i] - mx, positions[i + 1] - my, positions[i + 2] - mz);
    if (d > radius) radius = d;
  }
  radius = radius || 1;
  const dist = radius * 3;
  const scale = (cam.zoom * Math.min(width, height)) / (3.2 * radius);
  for (let i = 0, j = 0; i < positions.length; i += 3, j += 2) {
    const x0 = positions[i] - mx;
    const y0 = positions[i + 1] - my;
    const z0 = positions[i + 2] - mz;
    // yaw about y, then pitch about x
    const x1 = x0 * cy + z0 * sy;
    const z1 = -x0 * sy + z0 * cy;
    const y2 = y0 * cp - z1 * sp;
    const z2 = y0 * sp + z1 * cp;
    const persp = dist / (dist + z2);
    out[j] = width / 2 + x1 * scale * persp;
    out[j + 1] = height / 2 - y2 * scale * persp;
  }
  return out;
}

type Ctx2D = Pick<
  CanvasRenderingContext2D,
  "clearRect" | "beginPath" | "moveTo" | "lineTo" | "stroke"
> & { strokeStyle: string | CanvasGradient | CanvasPattern; lineWidth: number };

export class OrbitViewer {
  cam: Camera = { yaw: 0.7, pitch: 0.5, zoom: 1 };
  private edges: Uint32Array;
  private dragging = false;
  private lastX = 0;
  private lastY = 0;

  constructor(
    private readonly mesh: ParsedMesh,
    private readonly width: number,
    private readonly height: number,
  ) {
    this.edges = wireframeEdges(mesh.indices);
  }

  render(ctx: Ctx2D): void {
    const pts = projectVertices(this.mesh.positions, this.cam, this.width, this.height);
    ctx.clearRect(0, 0, this.width, this.height);
    ctx.strokeStyle = "#2f7d4f";
    ctx.lineWidth = 1;
    ctx.beginPath();
    for (let e = 0; e < this.edges.length; e += 2) {
      const a = this.edges[e] * 2;
      const b = this.edges[e + 1] * 2;
      ctx.moveTo(pts[a], pts[a + 1]);
      ctx.lineTo(pts[b], pts[b + 1]);
    }
    ctx.stroke();
  }

  pointerDown(x: number, y: number): void {
    this.dragging = true;
    this.lastX = x;
    this.lastY = y;
  }

  pointerMove(x: number, y: number): boolean {
    if (!this.dragging) return false;
    this.cam.yaw += (x - this.lastX) * 0.01;
    this.cam.pitch = Math.max(-1.5, Math.min(1.5, this.cam.pitch + (y - this.lastY) * 0.01));
    this.lastX = x;
    this.lastY = y;
    return true;
  }

  pointerUp(): void {
    this.dragging = false;
  }
}
