/**
 * Client-side stroke buffer. Mirrors the server's accumulation rules
 * exactly (consecutive points closer than 0.5 px are merged, nothing else
 * is smoothed), so the polygon the server closes is the polygon the user
 * drew and server-side geometry stays authoritative.
 */

export interface Point {
  x: number;
  y: number;
}

export const MERGE_DISTANCE_PX = 0.5;

export class StrokeBuffer {
  readonly points: Point[] = [];

  /** Append a pointer sample; returns false when merged into the last point. */
  add(x: number, y: number): boolean {
    const last = this.points[this.points.length - 1];
    if (last && Math.hypot(x - last.x, y - last.y) < MERGE_DISTANCE_PX) {
      return false;
    }
    this.points.push({ x, y });
    return true;
  }

  clear(): void {
    this.points.length = 0;
  }

  /** Area of the polygon formed by closing the current stroke. */
  area(): number {
    return shoelaceArea(this.points);
  }
}

/** Unsigned polygon area (open vertex list, implicitly closed). */
export function shoelaceArea(points: readonly Point[]): number {
  const n = points.length;
  if (n < 3) return 0;
  let acc = 0;
  for (let i = 0; i < n; i++) {
    const a = points[i];
    const b = points[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return Math.abs(acc) / 2;
}
