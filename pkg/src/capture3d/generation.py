"""Image-to-3D stage: an async generator-backend abstraction plus a
deterministic silhouette-extrusion stub so meshes exist without any
neural model, and structural mesh validation.

Jobs are drained by a small bounded worker pool; callers poll job state.
A job's state only ever moves queued -> running -> succeeded | failed.
"""

from __future__ import annotations

import math
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np

import httpx

from . import imaging
from .detection import ObjectPayload, decode_payload_image
from .errors import (
    BackendTimeout,
    BackendUnavailable,
    DegenerateSilhouette,
    EmptyMask,
    MalformedAsset,
    QueueFull,
)
from .imaging import BinaryMask

#: pixel edge length in meters when lifting silhouettes to 3D
DEFAULT_SCALE_M_PER_PX = 0.001

#: silhouette simplification tolerance, pixels
SIMPLIFY_TOLERANCE_PX = 1.5


@dataclass
class Mesh:
    """Indexed triangle mesh; coordinates are float64 meters."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
                raise MalformedAsset("face index out of range")
            same = (
                (self.faces[:, 0] == self.faces[:, 1])
                | (self.faces[:, 1] == self.faces[:, 2])
                | (self.faces[:, 0] == self.faces[:, 2])
            )
            if same.any():
                raise MalformedAsset("face with repeated vertex index")
        if not np.isfinite(self.vertices).all():
            raise MalformedAsset("non-finite vertex coordinate")

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)


@dataclass
class ValidationReport:
    is_manifold_edge: bool
    degenerate_faces: int
    bounding_box: tuple
    volume: float
    boundary_edges: int

    @property
    def watertight(self) -> bool:
        return self.is_manifold_edge and self.boundary_edges == 0


def face_areas(mesh: Mesh) -> np.ndarray:
    v = mesh.vertices
    a = v[mesh.faces[:, 1]] - v[mesh.faces[:, 0]]
    b = v[mesh.faces[:, 2]] - v[mesh.faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(a, b), axis=1)


def validate_mesh(mesh: Mesh) -> ValidationReport:
    """Edge-manifold check, degenerate-face count, bbox and signed volume.

    Volume uses the divergence theorem (sum of signed tetrahedra against
    the origin); it is only meaningful for closed, consistently oriented
    surfaces but is always reported.
    """
    edges = {}
    for tri in mesh.faces:
        for i in range(3):
            e = (int(tri[i]), int(tri[(i + 1) % 3]))
            key = (min(e), max(e))
            edges[key] = edges.get(key, 0) + 1
    manifold = all(c <= 2 for c in edges.values())
    boundary = sum(1 for c in edges.values() if c == 1)
    degenerate = int((face_areas(mesh) < 1e-12).sum()) if len(mesh.faces) else 0
    v = mesh.vertices
    if len(v):
        bbox = (v.min(axis=0).tolist(), v.max(axis=0).tolist())
    else:
        bbox = ([0.0] * 3, [0.0] * 3)
    vol = 0.0
    for tri in mesh.faces:
        p0, p1, p2 = v[tri[0]], v[tri[1]], v[tri[2]]
        vol += np.dot(p0, np.cross(p1, p2)) / 6.0
    return ValidationReport(
        is_manifold_edge=manifold,
        degenerate_faces=degenerate,
        bounding_box=bbox,
        volume=float(vol),
        boundary_edges=boundary,
    )


# --- silhouette extrusion ----------------------------------------------------


def _dp_simplify(points: np.ndarray, tolerance: float) -> np.ndarray:
    """Douglas-Peucker on a closed loop: anchor at the point farthest from
    the start, simplify both halves, then rejoin."""

    def simplify_open(pts):
        if len(pts) <= 2:
            return pts
        a, b = pts[0], pts[-1]
        ab = b - a
        ab_len = np.linalg.norm(ab)
        if ab_len < 1e-12:
            d = np.linalg.norm(pts - a, axis=1)
        else:
            rel = pts - a
            d = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / ab_len
        k = int(np.argmax(d))
        if d[k] <= tolerance:
            return np.array([a, b])
        left = simplify_open(pts[: k + 1])
        right = simplify_open(pts[k:])
        return np.vstack([left[:-1], right])

    far = int(np.argmax(np.linalg.norm(points - points[0], axis=1)))
    first = simplify_open(points[: far + 1])
    second = simplify_open(np.vstack([points[far:], points[:1]]))
    loop = np.vstack([first[:-1], second[:-1]])
    return loop


def _ear_clip(poly: np.ndarray) -> list:
    """Triangulate a simple CCW polygon; returns index triples."""
    n = len(poly)
    idx = list(range(n))
    tris = []

    def cross(o, a, b):
        return (poly[a][0] - poly[o][0]) * (poly[b][1] - poly[o][1]) - (
            poly[a][1] - poly[o][1]
        ) * (poly[b][0] - poly[o][0])

    def point_in_tri(p, a, b, c):
        d1 = (poly[a][0] - p[0]) * (poly[b][1] - p[1]) - (poly[b][0] - p[0]) * (poly[a][1] - p[1])
        d2 = (poly[b][0] - p[0]) * (poly[c][1] - p[1]) - (poly[c][0] - p[0]) * (poly[b][1] - p[1])
        d3 = (poly[c][0] - p[0]) * (poly[a][1] - p[1]) - (poly[a][0] - p[0]) * (poly[c][1] - p[1])
        neg = (d1 < 0) or (d2 < 0) or (d3 < 0)
        pos = (d1 > 0) or (d2 > 0) or (d3 > 0)
        return not (neg and pos)

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * n * n:
            raise DegenerateSilhouette("ear clipping failed to converge")
        clipped = False
        m = len(idx)
        for k in range(m):
            prev, cur, nxt = idx[(k - 1) % m], idx[k], idx[(k + 1) % m]
            if cross(prev, cur, nxt) <= 1e-12:
                continue  # reflex or collinear corner
            ear = True
            for other in idx:
                if other in (prev, cur, nxt):
                    continue
                if point_in_tri(poly[other], prev, cur, nxt):
                    ear = False
                    break
            if ear:
                tris.append((prev, cur, nxt))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise DegenerateSilhouette("no ear found; silhouette is degenerate")
    tris.append((idx[0], idx[1], idx[2]))
    return tris


def silhouette_polygon(mask: BinaryMask, tolerance_px: float = SIMPLIFY_TOLERANCE_PX) -> np.ndarray:
    """Simplified outer boundary of the mask's largest component, in pixels."""
    if mask.count() == 0:
        raise EmptyMask("mask has no set bits")
    contours = imaging.extract_contours(mask)
    if not contours:
        raise DegenerateSilhouette("component too small to trace")
    outline = imaging.largest_contour(contours)
    poly = _dp_simplify(outline.points.astype(np.float64), tolerance_px)
    if len(poly) < 3 or imaging.shoelace_area(poly) < 1e-9:
        raise DegenerateSilhouette("simplified outline has no area")
    return poly


def stub_extrude(mask: BinaryMask, depth_policy: str = "sqrtArea", depth_m: float = 0.02,
                 scale_m_per_px: float = DEFAULT_SCALE_M_PER_PX) -> Mesh:
    """Deterministic stand-in generator: extrude the mask silhouette into a prism.

    ``depth_policy`` is "fixed" (use ``depth_m``) or "sqrtArea"
    (depth = 0.4 * sqrt(silhouette area in m^2), a placeholder rule with no
    physical meaning).  The prism is centered on z = 0.
    """
    poly_px = silhouette_polygon(mask)
    # flip y so the mesh is upright in a y-up world, then force CCW
    pts = np.column_stack([poly_px[:, 0], -poly_px[:, 1]]) * scale_m_per_px
    if imaging.shoelace_signed(pts) < 0:
        pts = pts[::-1].copy()
    area_m2 = imaging.shoelace_area(pts)
    if depth_policy == "fixed":
        depth = float(depth_m)
    elif depth_policy == "sqrtArea":
        depth = 0.4 * math.sqrt(area_m2)
    else:
        raise ValueError(f"unknown depth policy {depth_policy!r}")
    if depth <= 0:
        raise DegenerateSilhouette("extrusion depth is zero")

    n = len(pts)
    half = depth / 2.0
    top = np.column_stack([pts[:, 0], pts[:, 1], np.full(n, half)])
    bottom = np.column_stack([pts[:, 0], pts[:, 1], np.full(n, -half)])
    vertices = np.vstack([top, bottom])

    cap = _ear_clip(pts)
    faces = []
    for a, b, c in cap:
        faces.append((a, b, c))  # top cap, +z
    for a, b, c in cap:
        faces.append((a + n, c + n, b + n))  # bottom cap, -z
    for i in range(n):
        j = (i + 1) % n
        faces.append((i, i + n, j + n))
        faces.append((i, j + n, j))
    return Mesh(vertices=vertices, faces=np.asarray(faces, dtype=np.int64))


# --- generation requests and jobs ---------------------------------------------


@dataclass
class GeneratorConfig:
    backend: str = "stub"  # "stub" | "external"
    external_url: str = ""
    timeout_ms: int = 120_000
    depth_policy: str = "sqrtArea"
    depth_m: float = 0.02
    scale_m_per_px: float = DEFAULT_SCALE_M_PER_PX
    max_pending: int = 64
    workers: int = 2


@dataclass
class GenerationRequest:
    payload: ObjectPayload
    params: dict = field(default_factory=dict)
    requested_at: float = field(default_factory=time.time)


class GenerationJob:
    """Lifecycle record of one image-to-3D request."""

    STATES = ("queued", "running", "succeeded", "failed")

    def __init__(self, job_id: str):
        self.job_id = job_id
        self.state = "queued"
        self.result: Mesh = None
        self.error: str = None
        self.timings = {"conversion_ms": None, "simplify_ms": None, "load_render_ms": None}
        self._lock = threading.Lock()

    def _transition(self, new_state: str):
        with self._lock:
            order = self.STATES.index
            if self.state in ("succeeded", "failed"):
                raise RuntimeError(f"job {self.job_id} is terminal ({self.state})")
            if order(new_state) <= order(self.state):
                raise RuntimeError(f"illegal transition {self.state} -> {new_state}")
            self.state = new_state

    def view(self) -> dict:
        return {
            "job_id": self.job_id,
            "state": self.state,
            "error": self.error,
            "timings": dict(self.timings),
            "mesh": None
            if self.result is None
            else {"vertices": self.result.vertex_count, "faces": self.result.face_count},
        }


def stub_generate(req: GenerationRequest, cfg: GeneratorConfig) -> Mesh:
    """Extrude the payload's alpha channel; fully deterministic."""
    img = decode_payload_image(req.payload)
    mask = BinaryMask(img.array[:, :, 3] > 0)
    return stub_extrude(mask, cfg.depth_policy, cfg.depth_m, cfg.scale_m_per_px)


def external_generate(req: GenerationRequest, cfg: GeneratorConfig) -> Mesh:
    """POST the payload to the generator service and parse the OBJ reply.

    Contract v1 (docs/backends.md): the service answers with JSON
    ``{"obj": "<OBJ text>"}`` either directly or after polling
    ``GET {url}/v1/generate/{id}`` when the first reply carries an id.
    """
    from .meshops import import_obj

    if not cfg.external_url:
        raise BackendUnavailable("no external generator URL configured")
    body = {
        "label": req.payload.label,
        "image_png_base64": req.payload.png_base64,
        "params": {str(k): str(v) for k, v in (req.params or {}).items()},
    }
    base = cfg.external_url.rstrip("/")
    deadline = time.monotonic() + cfg.timeout_ms / 1000.0
    try:
        resp = httpx.post(base + "/v1/generate", json=body, timeout=cfg.timeout_ms / 1000.0)
        resp.raise_for_status()
        data = resp.json()
        while "obj" not in data:
            if "id" not in data:
                raise MalformedAsset("generator reply carries neither obj nor id")
            if time.monotonic() > deadline:
                raise BackendTimeout(f"generator exceeded {cfg.timeout_ms} ms")
            time.sleep(min(1.0, max(0.0, deadline - time.monotonic())))
            resp = httpx.get(f"{base}/v1/generate/{data['id']}", timeout=cfg.timeout_ms / 1000.0)
            resp.raise_for_status()
            data = resp.json()
        return import_obj(data["obj"])
    except httpx.TimeoutException as exc:
        raise BackendTimeout(f"generator timed out after {cfg.timeout_ms} ms") from exc
    except httpx.HTTPError as exc:
        raise BackendUnavailable(f"generator unreachable: {exc}") from exc
    except ValueError as exc:
        raise MalformedAsset(f"generator returned invalid JSON: {exc}") from None


class JobQueue:
    """Bounded queue with a fixed worker pool; jobs are independent."""

    def __init__(self, cfg: GeneratorConfig = None):
        self.cfg = cfg or GeneratorConfig()
        self._jobs = {}
        self._pending = queue.Queue()
        self._lock = threading.Lock()
        self._workers = []
        self._stop = threading.Event()

    def _ensure_workers(self):
        if self._workers:
            return
        for i in range(max(1, self.cfg.workers)):
            t = threading.Thread(target=self._worker, name=f"gen-worker-{i}", daemon=True)
            t.start()
            self._workers.append(t)

    def submit(self, req: GenerationRequest, backend: str = None, on_success=None) -> GenerationJob:
        """Enqueue a request. Backend failures surface as the job's failed
        state, never as an exception after enqueue; only QueueFull throws."""
        with self._lock:
            pending = sum(1 for j in self._jobs.values() if j.state in ("queued", "running"))
            if pending >= self.cfg.max_pending:
                raise QueueFull(f"{pending} jobs already pending")
            job = GenerationJob(job_id=uuid.uuid4().hex[:16])
            self._jobs[job.job_id] = job
        self._pending.put((job, req, backend or self.cfg.backend, on_success))
        self._ensure_workers()
        return job

    def get(self, job_id: str) -> GenerationJob:
        return self._jobs.get(job_id)

    def _run_one(self, job: GenerationJob, req: GenerationRequest, backend: str, on_success):
        job._transition("running")
        started = time.perf_counter()
        try:
            if backend == "stub":
                mesh = stub_generate(req, self.cfg)
            elif backend == "external":
                mesh = external_generate(req, self.cfg)
            else:
                raise BackendUnavailable(f"unknown generator backend {backend!r}")
            job.timings["conversion_ms"] = _ms_since(started)
            if on_success is not None:
                mesh = on_success(job, mesh)
            job.result = mesh
            job._transition("succeeded")
        except Exception as exc:
            if job.timings["conversion_ms"] is None:
                job.timings["conversion_ms"] = _ms_since(started)
            job.error = f"{type(exc).__name__}: {exc}"
            job._transition("failed")

    def _worker(self):
        while not self._stop.is_set():
            try:
                item = self._pending.get(timeout=0.1)
            except queue.Empty:
                continue
            self._run_one(*item)
            self._pending.task_done()

    def wait(self, job: GenerationJob, timeout_s: float = 30.0) -> GenerationJob:
        deadline = time.monotonic() + timeout_s
        while job.state in ("queued", "running") and time.monotonic() < deadline:
            time.sleep(0.005)
        return job

    def shutdown(self):
        self._stop.set()
        for t in self._workers:
            t.join(timeout=2.0)
        self._workers.clear()


def _ms_since(start: float) -> int:
    return max(0, int(round((time.perf_counter() - start) * 1000.0)))
