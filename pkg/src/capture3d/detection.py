"""Instance-segmentation stage: a backend-agnostic detector interface with
confidence and zone filtering, edge-precise object isolation, and the
base64 payload encoding used on the wire.

Two backends ship in-tree:

* ``external``: POSTs the frame to an HTTP segmentation service
  (contract in docs/backends.md, masks run-length encoded)
* ``reference``: a deterministic color-blob segmenter, so the whole
  pipeline runs and is testable without any neural network
"""

from __future__ import annotations

import base64
import uuid
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

import httpx

from . import imaging
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    EmptyMask,
    EncodingFailure,
    MalformedBackendResponse,
)
from .imaging import BinaryMask, PixelRect, RasterImage
from .lasso import LassoPolygon, mask_inside_fraction

#: default hue windows treated as the drawn stroke's red
RED_HUE_RANGES = ((0.0, 10.0), (350.0, 360.0))

_STRUCT8 = np.ones((3, 3), dtype=bool)

# 12-entry named-color table used by the reference segmenter; labels are
# assigned by circular hue distance
COLOR_TABLE = (
    (0.0, "red"),
    (30.0, "orange"),
    (60.0, "yellow"),
    (90.0, "chartreuse"),
    (120.0, "green"),
    (150.0, "spring green"),
    (180.0, "cyan"),
    (210.0, "azure"),
    (240.0, "blue"),
    (270.0, "violet"),
    (300.0, "magenta"),
    (330.0, "rose"),
)


@dataclass
class DetectorConfig:
    confidence_threshold: float = 0.5
    backend: str = "reference"  # "reference" | "external"
    external_url: str = ""
    timeout_ms: int = 30_000
    crop_padding_px: int = 4
    zone_min_fraction: float = 0.5
    stroke_hue_ranges: tuple = RED_HUE_RANGES
    stroke_s_min: float = 0.5
    stroke_v_min: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            # out-of-range thresholds are clamped rather than rejected
            self.confidence_threshold = min(1.0, max(0.0, self.confidence_threshold))
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


@dataclass
class DetectedObject:
    """One segmented object in full-frame coordinates."""

    id: str
    label: str
    confidence: float
    bbox: PixelRect
    mask: BinaryMask
    crop: RasterImage


@dataclass
class ObjectPayload:
    """Wire form of an isolated object: PNG crop as padded base64."""

    label: str
    png_base64: str
    width_px: int
    height_px: int


@dataclass
class RawDetection:
    """Backend output before filtering, in the coordinates of the image
    that was handed to the backend."""

    label: str
    confidence: float
    mask: BinaryMask


# --- RLE mask codec (wire format, see docs/backends.md) -------------------


def rle_encode(mask: BinaryMask) -> list:
    """Row-major run lengths, alternating skip/fill and starting with skip."""
    flat = mask.bits.reshape(-1)
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)  # leading skip of zero keeps the alternation
    return [int(r) for r in runs]


def rle_decode(counts, width: int, height: int) -> BinaryMask:
    total = width * height
    flat = np.zeros(total, dtype=bool)
    pos = 0
    fill = False
    for c in counts:
        c = int(c)
        if c < 0 or pos + c > total:
            raise MalformedBackendResponse("RLE counts overflow the mask size")
        if fill:
            flat[pos : pos + c] = True
        pos += c
        fill = not fill
    if pos != total:
        raise MalformedBackendResponse(f"RLE counts cover {pos} of {total} pixels")
    return BinaryMask(flat.reshape(height, width))


# --- isolation and payloads ------------------------------------------------


def isolate_object(img: RasterImage, mask: BinaryMask, padding_px: int = 0) -> RasterImage:
    """Crop to the mask's padded bounding box; background goes alpha 0."""
    if mask.count() == 0:
        raise EmptyMask("cannot isolate from an empty mask")
    rect = imaging.clamp_rect(imaging.bounding_box(mask), img.width, img.height, padding_px)
    window = img.array[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w].copy()
    bits = mask.bits[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w]
    window[:, :, 3] = np.where(bits, 255, 0).astype(np.uint8)
    return RasterImage(window)


def encode_payload(obj: DetectedObject) -> ObjectPayload:
    try:
        png = imaging.encode_png(obj.crop)
        b64 = base64.b64encode(png).decode("ascii")
    except Exception as exc:  # encoding must never take the pipeline down silently
        raise EncodingFailure(f"PNG/base64 encoding failed: {exc}") from None
    return ObjectPayload(
        label=obj.label,
        png_base64=b64,
        width_px=obj.crop.width,
        height_px=obj.crop.height,
    )


def decode_payload_image(payload: ObjectPayload) -> RasterImage:
    return imaging.decode_png(base64.b64decode(payload.png_base64))


# --- reference backend ------------------------------------------------------


def _circular_mean_hue(hues: np.ndarray) -> float:
    rad = np.deg2rad(hues)
    ang = np.arctan2(np.sin(rad).mean(), np.cos(rad).mean())
    return float(np.rad2deg(ang) % 360.0)


def _nearest_color_name(hue: float) -> str:
    best, best_d = None, 1e9
    for center, name in COLOR_TABLE:
        d = abs(hue - center) % 360.0
        d = min(d, 360.0 - d)
        if d < best_d:
            best, best_d = name, d
    return best


def reference_raw(img: RasterImage, cfg: DetectorConfig = None) -> list:
    """Deterministic color-blob detections: 8-connected components of
    saturated, bright pixels outside the stroke-red hue windows."""
    cfg = cfg or DetectorConfig()
    h, s, v = imaging.hsv_planes(img)
    fg = (s >= 0.4) & (v >= 0.3) & ~imaging.hue_in_ranges(h, cfg.stroke_hue_ranges)
    labels, n = ndimage.label(fg, structure=_STRUCT8)
    out = []
    for idx in range(1, n + 1):
        bits = labels == idx
        mean_hue = _circular_mean_hue(h[bits])
        out.append(
            RawDetection(
                label=_nearest_color_name(mean_hue),
                confidence=1.0,
                mask=BinaryMask(bits),
            )
        )
    return out


def reference_segment(img: RasterImage, cfg: DetectorConfig = None) -> list:
    """Reference-backend detections materialized as full DetectedObjects."""
    cfg = cfg or DetectorConfig()
    return [_materialize(img, raw, cfg) for raw in reference_raw(img, cfg)]


# --- external backend --------------------------------------------------------


def external_raw(img: RasterImage, cfg: DetectorConfig):
    """POST the frame to the configured segmentation service (contract v1)."""
    if not cfg.external_url:
        raise BackendUnavailable("no external detector URL configured")
    body = {
        "image_png_base64": base64.b64encode(imaging.encode_png(img)).decode("ascii"),
        "confidence_threshold": cfg.confidence_threshold,
    }
    url = cfg.external_url.rstrip("/") + "/v1/segment"
    try:
        resp = httpx.post(url, json=body, timeout=cfg.timeout_ms / 1000.0)
        resp.raise_for_status()
        data = resp.json()
    except httpx.TimeoutException as exc:
        raise BackendTimeout(f"detector timed out after {cfg.timeout_ms} ms") from exc
    except httpx.HTTPError as exc:
        raise BackendUnavailable(f"detector unreachable: {exc}") from exc
    except ValueError as exc:
        raise MalformedBackendResponse("detector returned invalid JSON") from exc
    return _parse_detections(data, img.width, img.height)


def _parse_detections(data, width: int, height: int):
    try:
        entries = data["detections"]
        out = []
        for e in entries:
            mask = rle_decode(e["rle_mask"], width, height)
            out.append(
                RawDetection(
                    label=str(e["label"]),
                    confidence=float(e["confidence"]),
                    mask=mask,
                )
            )
        meta = {k: data[k] for k in ("gpu_util_pct", "gpu_mem_gb") if k in data}
        return out, meta
    except MalformedBackendResponse:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedBackendResponse(f"detector response malformed: {exc}") from None


# --- the segment operation ----------------------------------------------------


@dataclass
class SegmentResult:
    objects: list
    backend_meta: dict = field(default_factory=dict)


def _materialize(img: RasterImage, raw: RawDetection, cfg: DetectorConfig) -> DetectedObject:
    bbox = imaging.bounding_box(raw.mask)
    return DetectedObject(
        id=uuid.uuid4().hex[:12],
        label=raw.label,
        confidence=raw.confidence,
        bbox=bbox,
        mask=raw.mask,
        crop=isolate_object(img, raw.mask, cfg.crop_padding_px),
    )


def _embed_mask(local: BinaryMask, rect: PixelRect, width: int, height: int) -> BinaryMask:
    bits = np.zeros((height, width), dtype=bool)
    bits[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w] = local.bits
    return BinaryMask(bits)


def segment_detailed(
    img: RasterImage,
    zone: LassoPolygon = None,
    cfg: DetectorConfig = None,
    backend_fn=None,
) -> SegmentResult:
    """Run the configured backend and apply the confidence and zone filters.

    When a zone is given, the backend only sees the zone's padded bounding
    window (cheaper, and keeps the focus on the selection); the resulting
    masks are re-embedded into full-frame coordinates before filtering.
    ``backend_fn(img, cfg) -> (raw detections, meta dict)`` overrides the
    configured backend, which tests use to inject synthetic confidences.
    """
    cfg = cfg or DetectorConfig()
    if backend_fn is None:
        if cfg.backend == "reference":
            backend_fn = lambda im, c: (reference_raw(im, c), {})
        elif cfg.backend == "external":
            backend_fn = external_raw
        else:
            raise BackendUnavailable(f"unknown detector backend {cfg.backend!r}")

    window = None
    if zone is not None:
        xs, ys = zone.vertices[:, 0], zone.vertices[:, 1]
        rect = PixelRect(
            x=int(np.floor(xs.min())),
            y=int(np.floor(ys.min())),
            w=max(1, int(np.ceil(xs.max() - np.floor(xs.min()))) + 1),
            h=max(1, int(np.ceil(ys.max() - np.floor(ys.min()))) + 1),
        )
        window = imaging.clamp_rect(rect, img.width, img.height, cfg.crop_padding_px)
        backend_img = RasterImage(img.array[window.y : window.y + window.h, window.x : window.x + window.w].copy())
    else:
        backend_img = img

    raw, meta = _normalize_backend_result(backend_fn(backend_img, cfg))

    kept = []
    for det in raw:
        if det.confidence < cfg.confidence_threshold:
            continue
        mask = det.mask
        if window is not None and (mask.height, mask.width) == (window.h, window.w):
            mask = _embed_mask(mask, window, img.width, img.height)
        elif (mask.height, mask.width) != (img.height, img.width):
            raise MalformedBackendResponse(
                f"mask is {mask.width}x{mask.height}, expected the backend window or the full frame"
            )
        if mask.count() == 0:
            continue
        if zone is not None and mask_inside_fraction(zone, mask) < cfg.zone_min_fraction:
            continue
        kept.append(RawDetection(label=det.label, confidence=det.confidence, mask=mask))

    objects = [_materialize(img, det, cfg) for det in kept]
    objects.sort(key=lambda o: (-o.confidence, o.bbox.y, o.bbox.x))
    return SegmentResult(objects=objects, backend_meta=meta)


def _normalize_backend_result(result):
    if isinstance(result, tuple):
        return result
    return result, {}


def segment(img: RasterImage, zone: LassoPolygon = None, cfg: DetectorConfig = None, backend_fn=None) -> list:
    """Detect objects in the frame (optionally restricted to a zone)."""
    return segment_detailed(img, zone, cfg, backend_fn).objects


# --- stroke-drawn zone recovery ------------------------------------------------


def detect_stroke_zone(img: RasterImage, cfg: DetectorConfig = None, min_contour_area: int = 25) -> LassoPolygon:
    """Recover the selection zone from a stroke drawn into the frame.

    The stroke color mask's largest component is located; if it encloses a
    hole (the usual closed-loop stroke), the hole's outer boundary becomes
    the zone, so the crop stays inside the stroke's inner edge.
    """
    cfg = cfg or DetectorConfig()
    mask = imaging.color_mask(img, cfg.stroke_hue_ranges, cfg.stroke_s_min, cfg.stroke_v_min)
    contours = imaging.extract_contours(mask, min_area=min_contour_area)
    ring = imaging.largest_contour(contours)
    ring_bits = imaging.rasterize_polygon(ring.points, img.width, img.height).bits
    holes = ring_bits & ~mask.bits
    hole_contours = imaging.extract_contours(BinaryMask(holes), min_area=min_contour_area)
    boundary = imaging.largest_contour(hole_contours) if hole_contours else ring
    return LassoPolygon.from_vertices(boundary.points.astype(np.float64))
