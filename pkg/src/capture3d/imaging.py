"""Raster primitives: HSV conversion, color masking, contour tracing,
polygon rasterization, bounding boxes and cropping.

Everything here is pure computation over value types (no ML, no IO except
the PNG codec), so any number of workers may call into it concurrently.

Conventions, fixed so tests can be exact:
  * pixel centers sit at integer coordinates; (0, 0) is the top-left pixel
  * polygon fill is even-odd and boundary-inclusive (a pixel whose center
    lies exactly on an edge is set)
  * contours are outer boundaries of 8-connected components; holes are
    ignored, and a contour's ``area`` is the pixel count of the region it
    encloses (holes filled), not the number of boundary points
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    DegeneratePolygon,
    EmptyContourSet,
    EmptyMask,
    MalformedImage,
    RectOutOfBounds,
)

_EPS = 1e-9

# 8-connectivity structure for component labeling
_STRUCT8 = np.ones((3, 3), dtype=bool)


@dataclass
class RasterImage:
    """RGBA image, 8 bits per channel, row-major ``(h, w, 4)`` array."""

    array: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.array, dtype=np.uint8)
        if a.ndim != 3 or a.shape[2] != 4 or a.shape[0] < 1 or a.shape[1] < 1:
            raise MalformedImage(f"expected (h, w, 4) uint8 array, got shape {a.shape}")
        self.array = a

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @classmethod
    def blank(cls, width: int, height: int, rgba=(0, 0, 0, 255)) -> "RasterImage":
        a = np.empty((height, width, 4), dtype=np.uint8)
        a[:, :] = rgba
        return cls(a)

    def copy(self) -> "RasterImage":
        return RasterImage(self.array.copy())


@dataclass
class BinaryMask:
    """One boolean per pixel, row-major, same grid as the source image."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=bool)
        if b.ndim != 2:
            raise ValueError(f"expected (h, w) bool array, got shape {b.shape}")
        self.bits = b

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass
class HsvPixel:
    """Hexcone HSV: h in [0, 360) degrees, s and v in [0, 1]; h == 0 when s == 0."""

    h: float
    s: float
    v: float


@dataclass
class Contour:
    """Ordered outer-boundary pixels of one connected region.

    ``points`` is an (n, 2) int array of (x, y); consecutive points are
    8-connected and the last point connects back to the first.  ``area``
    is the enclosed pixel count (component plus any interior holes).
    """

    points: np.ndarray
    area: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)


@dataclass
class PixelRect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError("rect width and height must be positive")


# --- PNG codec ----------------------------------------------------------

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return (
        struct.pack(">I", len(data))
        + tag
        + data
        + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
    )


def encode_png(img: RasterImage) -> bytes:
    """Encode as an 8-bit RGBA PNG (filter 0 on every scanline, no interlace).

    The output is byte-deterministic for a given image, which keeps asset
    and payload bodies idempotent across repeated requests.
    """
    h, w = img.array.shape[:2]
    raw = bytearray()
    for row in img.array:
        raw.append(0)  # filter type 0 (None)
        raw.extend(row.tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)
    return (
        _PNG_SIG
        + _png_chunk(b"IHDR", ihdr)
        + _png_chunk(b"IDAT", zlib.compress(bytes(raw), 6))
        + _png_chunk(b"IEND", b"")
    )


def decode_png(data: bytes) -> RasterImage:
    """Decode any valid PNG (Pillow-backed) into an RGBA raster."""
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(io.BytesIO(data)) as im:
            rgba = im.convert("RGBA")
            return RasterImage(np.asarray(rgba, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise MalformedImage(f"cannot decode PNG: {exc}") from None


# --- HSV ----------------------------------------------------------------


def rgb_to_hsv(pixel) -> HsvPixel:
    """Convert one RGBA (or RGB) pixel to hexcone HSV; alpha is ignored."""
    r, g, b = (float(pixel[0]) / 255.0, float(pixel[1]) / 255.0, float(pixel[2]) / 255.0)
    v = max(r, g, b)
    delta = v - min(r, g, b)
    s = 0.0 if v == 0.0 else delta / v
    if delta == 0.0:
        h = 0.0
    elif v == r:
        h = (60.0 * ((g - b) / delta)) % 360.0
    elif v == g:
        h = 60.0 * ((b - r) / delta) + 120.0
    else:
        h = 60.0 * ((r - g) / delta) + 240.0
    return HsvPixel(h % 360.0, s, v)


def hsv_to_rgb(p: HsvPixel):
    """Inverse hexcone conversion; returns an (r, g, b) uint8 tuple."""
    c = p.v * p.s
    hp = (p.h % 360.0) / 60.0
    x = c * (1.0 - abs(hp % 2.0 - 1.0))
    sector = int(hp) % 6
    r, g, b = [(c, x, 0.0), (x, c, 0.0), (0.0, c, x), (0.0, x, c), (x, 0.0, c), (c, 0.0, x)][sector]
    m = p.v - c
    return (
        int(round((r + m) * 255.0)),
        int(round((g + m) * 255.0)),
        int(round((b + m) * 255.0)),
    )


def hsv_planes(img: RasterImage):
    """Vectorized HSV decomposition of a whole image.

    Returns float64 planes (h, s, v) matching :func:`rgb_to_hsv` pixel for
    pixel (the scalar function is the reference; a test pins equality).
    """
    rgb = img.array[:, :, :3].astype(np.float64) / 255.0
    r, g, b = rgb[:, :, 0], rgb[:, :, 1], rgb[:, :, 2]
    v = rgb.max(axis=2)
    delta = v - rgb.min(axis=2)
    s = np.where(v == 0.0, 0.0, delta / np.where(v == 0.0, 1.0, v))
    h = np.zeros_like(v)
    nz = delta > 0.0
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    dl = np.where(nz, delta, 1.0)
    h[rmax] = (60.0 * ((g - b) / dl))[rmax] % 360.0
    h[gmax] = (60.0 * ((b - r) / dl))[gmax] + 120.0
    h[bmax] = (60.0 * ((r - g) / dl))[bmax] + 240.0
    return h % 360.0, s, v


def hue_in_ranges(h: np.ndarray, hue_ranges) -> np.ndarray:
    hit = np.zeros(h.shape, dtype=bool)
    for lo, hi in hue_ranges:
        lo, hi = float(lo) % 360.0, float(hi)
        hi = hi % 360.0 if hi != 360.0 else 360.0
        if lo <= hi:
            hit |= (h >= lo) & (h <= hi)
        else:  # wraparound, e.g. 350 -> 10
            hit |= (h >= lo) | (h <= hi)
    return hit


def color_mask(img: RasterImage, hue_ranges, s_min: float, v_min: float) -> BinaryMask:
    """Set a bit where the pixel's hue falls in any range and s/v clear the floors.

    ``hue_ranges`` is a list of (lo, hi) degree pairs; lo > hi wraps through 0.
    """
    h, s, v = hsv_planes(img)
    return BinaryMask(hue_in_ranges(h, hue_ranges) & (s >= s_min) & (v >= v_min))


# --- contours -----------------------------------------------------------

# Moore neighborhood, clockwise from north, as (dx, dy) with y growing down
_MOORE = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)]
_DIR_INDEX = {d: i for i, d in enumerate(_MOORE)}


def _trace_boundary(comp: np.ndarray, start_xy) -> list:
    """Moore-neighbor boundary walk (clockwise in image coordinates).

    ``comp`` is a padded bool array (one-pixel border of background) and
    ``start_xy`` the raster-first foreground pixel in padded coordinates.
    Terminates when the walk is about to repeat its very first move from
    the start pixel (Jacob's stopping criterion).
    """
    sx, sy = start_xy
    points = [(sx, sy)]
    # the pixel west of the raster-first pixel is always background
    backtrack = 6
    cx, cy = sx, sy
    first_move = None
    limit = 8 * comp.size + 8
    for _ in range(limit):
        move = None
        for k in range(1, 9):
            d = (backtrack + k) % 8
            dx, dy = _MOORE[d]
            if comp[cy + dy, cx + dx]:
                move = d
                last_bg = (backtrack + k - 1) % 8
                break
        if move is None:
            return points  # isolated pixel
        if (cx, cy) == (sx, sy):
            if first_move is None:
                first_move = move
            elif move == first_move:
                break
        bx, by = cx + _MOORE[last_bg][0], cy + _MOORE[last_bg][1]
        cx, cy = cx + _MOORE[move][0], cy + _MOORE[move][1]
        points.append((cx, cy))
        backtrack = _DIR_INDEX[(bx - cx, by - cy)]
    if len(points) > 1 and points[-1] == points[0]:
        points.pop()
    return points


def extract_contours(mask: BinaryMask, min_area: int = 0) -> list:
    """Outer boundary of every 8-connected foreground component.

    Components whose enclosed area falls below ``min_area`` (and any
    component too small to form a 3-point boundary) are dropped.  Results
    are ordered by the raster position of each component's first pixel.
    """
    if mask.count() == 0:
        return []
    labels, n = ndimage.label(mask.bits, structure=_STRUCT8)
    contours = []
    # scipy numbers components in raster order of first occurrence
    slices = ndimage.find_objects(labels)
    for idx in range(1, n + 1):
        sl = slices[idx - 1]
        comp_local = labels[sl] == idx
        # enclosed area: component with interior holes filled
        area = int(ndimage.binary_fill_holes(comp_local).sum())
        if area < min_area:
            continue
        padded = np.zeros((comp_local.shape[0] + 2, comp_local.shape[1] + 2), dtype=bool)
        padded[1:-1, 1:-1] = comp_local
        ys, xs = np.nonzero(padded)
        first = int(np.lexsort((xs, ys))[0])
        pts = _trace_boundary(padded, (int(xs[first]), int(ys[first])))
        if len(pts) < 3:
            continue
        off_x, off_y = sl[1].start - 1, sl[0].start - 1
        arr = np.asarray(pts, dtype=np.int64) + (off_x, off_y)
        contours.append(Contour(points=arr, area=area))
    return contours


def largest_contour(contours) -> Contour:
    """Max-area contour; equal areas break toward the earliest raster start."""
    if not contours:
        raise EmptyContourSet("no contours to choose from")
    def key(c: Contour):
        x0, y0 = int(c.points[0][0]), int(c.points[0][1])
        return (-c.area, y0, x0)
    return min(contours, key=key)


# --- polygon rasterization ---------------------------------------------


def _polygon_edges(points: np.ndarray):
    n = len(points)
    for i in range(n):
        yield points[i], points[(i + 1) % n]


def rasterize_polygon(points, width: int, height: int) -> BinaryMask:
    """Even-odd fill of a closed polygon; boundary pixels count as inside.

    ``points`` is a sequence of (x, y) vertices (open form, implicitly
    closed).  Raises DegeneratePolygon for fewer than 3 distinct vertices
    or zero enclosed area.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    distinct = [pts[0]]
    for p in pts[1:]:
        if abs(p[0] - distinct[-1][0]) > _EPS or abs(p[1] - distinct[-1][1]) > _EPS:
            distinct.append(p)
    while len(distinct) > 1 and abs(distinct[-1][0] - distinct[0][0]) < _EPS and abs(distinct[-1][1] - distinct[0][1]) < _EPS:
        distinct.pop()
    pts = np.asarray(distinct)
    if len(pts) < 3 or abs(shoelace_area(pts)) < _EPS:
        raise DegeneratePolygon("polygon is collinear or has zero area")

    bits = np.zeros((height, width), dtype=bool)
    y_lo = max(0, int(np.ceil(pts[:, 1].min() - _EPS)))
    y_hi = min(height - 1, int(np.floor(pts[:, 1].max() + _EPS)))
    for y in range(y_lo, y_hi + 1):
        crossings = []
        for p, q in _polygon_edges(pts):
            x1, y1 = p
            x2, y2 = q
            if abs(y1 - y2) < _EPS:
                if abs(y - y1) < _EPS:  # horizontal edge on this row: boundary span
                    lo = max(0, int(np.ceil(min(x1, x2) - _EPS)))
                    hi = min(width - 1, int(np.floor(max(x1, x2) + _EPS)))
                    if lo <= hi:
                        bits[y, lo : hi + 1] = True
                continue
            ymin, ymax = (y1, y2) if y1 < y2 else (y2, y1)
            if ymin - _EPS <= y <= ymax + _EPS:
                x_star = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                # boundary-inclusive: a center exactly on this edge is set
                xi = int(round(x_star))
                if abs(x_star - xi) < 1e-7 and 0 <= xi < width:
                    bits[y, xi] = True
                # half-open rule for parity (exclude the upper endpoint)
                if ymin <= y < ymax:
                    crossings.append(x_star)
        crossings.sort()
        for i in range(0, len(crossings) - 1, 2):
            lo = max(0, int(np.ceil(crossings[i] - _EPS)))
            hi = min(width - 1, int(np.floor(crossings[i + 1] + _EPS)))
            if lo <= hi:
                bits[y, lo : hi + 1] = True
    return BinaryMask(bits)


def shoelace_signed(points) -> float:
    """Signed polygon area (open vertex list); positive when counter-clockwise
    in a y-up frame, negative for the same winding in image coordinates."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0


def shoelace_area(points) -> float:
    """Unsigned polygon area via the shoelace formula (open vertex list)."""
    return abs(shoelace_signed(points))


# --- rectangles ---------------------------------------------------------


def bounding_box(mask: BinaryMask) -> PixelRect:
    """Minimal axis-aligned rect covering every set bit."""
    ys, xs = np.nonzero(mask.bits)
    if len(xs) == 0:
        raise EmptyMask("cannot bound an empty mask")
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return PixelRect(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1)


def clamp_rect(rect: PixelRect, width: int, height: int, padding: int = 0) -> PixelRect:
    """Expand by ``padding`` on every side, then clamp to the image bounds."""
    x0 = max(0, rect.x - padding)
    y0 = max(0, rect.y - padding)
    x1 = min(width, rect.x + rect.w + padding)
    y1 = min(height, rect.y + rect.h + padding)
    if x1 <= x0 or y1 <= y0:
        raise RectOutOfBounds(f"rect {rect} does not intersect a {width}x{height} image")
    return PixelRect(x=x0, y=y0, w=x1 - x0, h=y1 - y0)


def crop(img: RasterImage, rect: PixelRect, padding: int = 0) -> RasterImage:
    """Copy the padded, clamped window of ``rect`` out of the image."""
    r = clamp_rect(rect, img.width, img.height, padding)
    return RasterImage(img.array[r.y : r.y + r.h, r.x : r.x + r.w].copy())


def scale_to_fit(img: RasterImage, max_side: int) -> RasterImage:
    """Shrink so the longer side is at most ``max_side`` (nearest-neighbor,
    deterministic); images already small enough come back as plain copies."""
    longest = max(img.width, img.height)
    if longest <= max_side:
        return img.copy()
    from PIL import Image

    factor = max_side / longest
    w = max(1, int(round(img.width * factor)))
    h = max(1, int(round(img.height * factor)))
    pil = Image.fromarray(img.array, mode="RGBA").resize((w, h), Image.NEAREST)
    return RasterImage(np.asarray(pil, dtype=np.uint8))
