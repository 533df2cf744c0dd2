"""Zone-selection geometry: close a user stroke into a selection polygon
and decide how much of a detected mask falls inside it.

All operations are pure; stroke accumulation is owned by the server's
per-session record, so nothing here needs locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, StrokeTooShort, ZoneTooSmall
from .imaging import BinaryMask, shoelace_area

#: points closer together than this are merged while accumulating a stroke
MERGE_DISTANCE_PX = 0.5

#: zones smaller than this are treated as accidental gestures
DEFAULT_MIN_ZONE_AREA_PX2 = 400.0

_EPS = 1e-9


@dataclass
class Stroke:
    """Ordered user-drawn points in image space, with monotonic timestamps."""

    points: list = field(default_factory=list)
    started_at_ms: float = 0.0
    last_updated_at_ms: float = 0.0

    def append(self, pts, at_ms: float = 0.0):
        """Add points, dropping any closer than MERGE_DISTANCE_PX to the last."""
        added = 0
        for p in pts:
            x, y = float(p[0]), float(p[1])
            if math.isnan(x) or math.isnan(y):
                raise ValueError("stroke points must not contain NaN")
            if self.points:
                lx, ly = self.points[-1]
                if math.hypot(x - lx, y - ly) < MERGE_DISTANCE_PX:
                    continue
            self.points.append((x, y))
            added += 1
        if not self.started_at_ms:
            self.started_at_ms = at_ms
        self.last_updated_at_ms = at_ms
        return added


@dataclass
class LassoPolygon:
    """Closed selection region; vertices stored open, treated closed."""

    vertices: np.ndarray
    area_px: float

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)

    @classmethod
    def from_vertices(cls, vertices) -> "LassoPolygon":
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
        return cls(vertices=v, area_px=shoelace_area(v))


def _dedupe(points) -> list:
    out = []
    for p in points:
        x, y = float(p[0]), float(p[1])
        if out and math.hypot(x - out[-1][0], y - out[-1][1]) < MERGE_DISTANCE_PX:
            continue
        out.append((x, y))
    if len(out) > 1 and math.hypot(out[-1][0] - out[0][0], out[-1][1] - out[0][1]) < MERGE_DISTANCE_PX:
        out.pop()
    return out


def _segment_crossing(p1, p2, p3, p4):
    """Proper interior crossing of two segments, or None."""
    d1x, d1y = p2[0] - p1[0], p2[1] - p1[1]
    d2x, d2y = p4[0] - p3[0], p4[1] - p3[1]
    denom = d1x * d2y - d1y * d2x
    if abs(denom) < _EPS:
        return None
    ex, ey = p3[0] - p1[0], p3[1] - p1[1]
    t = (ex * d2y - ey * d2x) / denom
    u = (ex * d1y - ey * d1x) / denom
    if _EPS < t < 1.0 - _EPS and _EPS < u < 1.0 - _EPS:
        return (p1[0] + t * d1x, p1[1] + t * d1y), t, u
    return None


def _simple_loops(points) -> list:
    """Split a closed (possibly self-crossing) polyline into simple loops.

    Crossing points are inserted into both edges, then the vertex walk is
    unwound with a stack: revisiting a point closes the loop opened there.
    """
    n = len(points)
    inserts = {i: [] for i in range(n)}
    for i in range(n):
        a1, a2 = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share an endpoint, not a crossing
            b1, b2 = points[j], points[(j + 1) % n]
            hit = _segment_crossing(a1, a2, b1, b2)
            if hit:
                pt, t, u = hit
                inserts[i].append((t, pt))
                inserts[j].append((u, pt))
    seq = []
    for i in range(n):
        seq.append(points[i])
        for _, pt in sorted(inserts[i], key=lambda e: e[0]):
            seq.append(pt)

    def key(p):
        return (round(p[0] * 1e7), round(p[1] * 1e7))

    loops = []
    stack = []
    open_at = {}
    for p in seq:
        k = key(p)
        if k in open_at:
            i = open_at[k]
            loop = stack[i:]
            for q in loop:
                open_at.pop(key(q), None)
            del stack[i:]
            loops.append(loop)
        stack.append(p)
        open_at[k] = len(stack) - 1
    loops.append(stack)
    return [lp for lp in loops if len(lp) >= 3 and shoelace_area(lp) > _EPS]


def close_stroke(stroke: Stroke, min_area_px2: float = DEFAULT_MIN_ZONE_AREA_PX2) -> LassoPolygon:
    """Close the stroke into a simple polygon.

    Consecutive near-duplicates are merged first; if the closed stroke
    crosses itself, the largest simple loop wins.  Raises StrokeTooShort
    below 3 distinct points and ZoneTooSmall below the area floor.
    """
    pts = _dedupe(stroke.points)
    if len(pts) < 3:
        raise StrokeTooShort(f"need at least 3 distinct points, got {len(pts)}")
    loops = _simple_loops(pts)
    if not loops:
        raise StrokeTooShort("stroke does not enclose any region")
    best = max(loops, key=shoelace_area)
    area = shoelace_area(best)
    if area < min_area_px2:
        raise ZoneTooSmall(f"zone area {area:.1f} px^2 is below the {min_area_px2:.0f} px^2 minimum")
    return LassoPolygon(vertices=np.asarray(best, dtype=np.float64), area_px=area)


def point_in_polygon(poly: LassoPolygon, point) -> bool:
    """Even-odd membership test; points on the boundary count as inside."""
    px, py = float(point[0]), float(point[1])
    v = poly.vertices
    n = len(v)
    inside = False
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        # boundary check
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        seg2 = (x2 - x1) ** 2 + (y2 - y1) ** 2
        if seg2 < _EPS * _EPS:
            if abs(px - x1) < _EPS and abs(py - y1) < _EPS:
                return True
            continue
        if cross * cross <= _EPS * _EPS * seg2:
            dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)
            if -_EPS <= dot <= seg2 + _EPS:
                return True
        if (y1 <= py) != (y2 <= py):
            x_star = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_star:
                inside = not inside
    return inside


def mask_inside_fraction(poly: LassoPolygon, mask: BinaryMask) -> float:
    """Fraction of set bits whose pixel center lies inside the polygon."""
    ys, xs = np.nonzero(mask.bits)
    total = len(xs)
    if total == 0:
        raise EmptyMask("mask has no set bits")
    px = xs.astype(np.float64)
    py = ys.astype(np.float64)
    inside = np.zeros(total, dtype=bool)
    on_edge = np.zeros(total, dtype=bool)
    v = poly.vertices
    n = len(v)
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        seg2 = (x2 - x1) ** 2 + (y2 - y1) ** 2
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if seg2 >= _EPS * _EPS:
            dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)
            on_edge |= (cross * cross <= _EPS * _EPS * seg2) & (dot >= -_EPS) & (dot <= seg2 + _EPS)
        crossing = (y1 <= py) != (y2 <= py)
        if crossing.any():
            denom = y2 - y1 if abs(y2 - y1) > 0 else 1.0
            x_star = x1 + (py - y1) * (x2 - x1) / denom
            inside ^= crossing & (px < x_star)
    return float((inside | on_edge).sum()) / float(total)
