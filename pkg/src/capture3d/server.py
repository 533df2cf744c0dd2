"""Orchestration and wire surface: capture sessions, the capture-to-asset
workflow as an explicit state machine, job/asset endpoints and the metrics
report.

Sessions are mutated under a per-session lock (one logical writer each);
generation workers run independently; the metrics log is append-only and
aggregated on read.
"""

from __future__ import annotations

import base64
import threading
import time
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import imaging, meshops
from .config import AppConfig
from .detection import encode_payload, segment_detailed
from .errors import (
    MalformedImage,
    NotDetectedYet,
    NotReady,
    PipelineError,
    SessionLimitReached,
    UnknownJob,
    UnknownObject,
    UnknownSession,
)
from .generation import GenerationRequest, JobQueue
from .lasso import LassoPolygon, Stroke, close_stroke
from .meshops import DecimationParams


class IllegalState(PipelineError):
    """Request does not fit the session's current state."""


# --- metrics ----------------------------------------------------------------

METRIC_FIELDS = (
    "detection_ms",
    "conversion_ms",
    "simplify_ms",
    "load_render_ms",
    "gpu_util_pct",
    "gpu_mem_gb",
)


@dataclass
class MetricsRecord:
    detection_ms: float = None
    conversion_ms: float = None
    simplify_ms: float = None
    load_render_ms: float = None
    gpu_util_pct: float = None
    gpu_mem_gb: float = None


class MetricsLog:
    """Append-only samples per field; aggregates computed on read."""

    def __init__(self):
        self._samples = {f: [] for f in METRIC_FIELDS}
        self._lock = threading.Lock()

    def record(self, field_name: str, value) -> None:
        if value is None:
            return
        if field_name not in self._samples:
            raise KeyError(f"unknown metric field {field_name!r}")
        v = float(value)
        if field_name.endswith("_ms") and v < 0:
            raise ValueError("durations must be non-negative")
        with self._lock:
            self._samples[field_name].append(v)

    def ingest(self, record: MetricsRecord) -> None:
        for f in METRIC_FIELDS:
            self.record(f, getattr(record, f))

    def report(self) -> dict:
        out = {}
        with self._lock:
            for f in METRIC_FIELDS:
                samples = self._samples[f]
                entry = {"count": len(samples)}
                if samples:
                    arr = np.asarray(samples, dtype=np.float64)
                    entry["mean"] = float(arr.mean())
                    entry["p50"] = float(np.percentile(arr, 50))
                    entry["p95"] = float(np.percentile(arr, 95))
                out[f] = entry
        return out


# --- sessions ------------------------------------------------------------------


@dataclass
class CaptureSession:
    session_id: str
    frame: imaging.RasterImage
    mode: str  # "zone" | "all"
    state: str = "open"  # open -> zoneFinal -> detected; or open -> detected
    stroke: Stroke = field(default_factory=Stroke)
    zone: LassoPolygon = None
    objects: list = field(default_factory=list)
    detection_ms: int = None
    created_at: float = field(default_factory=time.monotonic)
    touched_at: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class PipelineService:
    """Glue between the HTTP surface and the library modules."""

    def __init__(self, config: AppConfig = None):
        self.config = config or AppConfig()
        self.sessions: dict = {}
        self.metrics = MetricsLog()
        self.jobs = JobQueue(self.config.generator)
        self.assets: dict = {}  # job_id -> glb bytes
        self.asset_fetched: set = set()
        self._store_lock = threading.Lock()

    # -- session store --

    def _sweep(self, now: float):
        ttl = self.config.session_ttl_s
        dead = [sid for sid, s in self.sessions.items() if now - s.touched_at > ttl]
        for sid in dead:
            self.sessions[sid].state = "expired"
            del self.sessions[sid]

    def _get_session(self, session_id: str) -> CaptureSession:
        with self._store_lock:
            now = time.monotonic()
            self._sweep(now)
            session = self.sessions.get(session_id)
            if session is None:
                raise UnknownSession(f"no session {session_id}")
            session.touched_at = now
            return session

    # -- operations --

    def create_capture(self, frame_png: bytes, mode: str) -> CaptureSession:
        if mode not in ("zone", "all"):
            raise IllegalState(f"mode must be 'zone' or 'all', got {mode!r}")
        frame = imaging.decode_png(frame_png)
        with self._store_lock:
            self._sweep(time.monotonic())
            if len(self.sessions) >= self.config.max_sessions:
                raise SessionLimitReached(f"{len(self.sessions)} sessions active")
            session = CaptureSession(session_id=uuid.uuid4().hex[:16], frame=frame, mode=mode)
            self.sessions[session.session_id] = session
        if mode == "all":
            with session.lock:
                started = time.perf_counter()
                result = segment_detailed(frame, None, self.config.detector)
                session.objects = result.objects
                session.detection_ms = _ms(started)
                session.state = "detected"
                self.metrics.record("detection_ms", session.detection_ms)
                for key, value in result.backend_meta.items():
                    self.metrics.record(key, value)
        return session

    def append_stroke(self, session_id: str, points) -> int:
        session = self._get_session(session_id)
        with session.lock:
            if session.mode != "zone":
                raise IllegalState("stroke points only apply to zone-mode sessions")
            if session.state != "open":
                raise IllegalState(f"cannot extend a stroke in state {session.state}")
            return session.stroke.append(points, at_ms=time.monotonic() * 1000.0)

    def finalize_zone(self, session_id: str) -> CaptureSession:
        session = self._get_session(session_id)
        with session.lock:
            if session.mode != "zone":
                raise IllegalState("finalize only applies to zone-mode sessions")
            if session.state not in ("open", "zoneFinal"):
                raise IllegalState(f"cannot finalize in state {session.state}")
            started = time.perf_counter()
            if session.zone is None:
                session.zone = close_stroke(session.stroke, self.config.min_zone_area_px2)
            session.state = "zoneFinal"
            result = segment_detailed(session.frame, session.zone, self.config.detector)
            session.objects = result.objects
            session.detection_ms = _ms(started)
            session.state = "detected"
            self.metrics.record("detection_ms", session.detection_ms)
            for key, value in result.backend_meta.items():
                self.metrics.record(key, value)
            return session

    def list_objects(self, session_id: str) -> list:
        session = self._get_session(session_id)
        with session.lock:
            if session.state != "detected":
                raise NotDetectedYet(f"session is in state {session.state}")
            menu = []
            for obj in session.objects:
                thumb = imaging.scale_to_fit(obj.crop, self.config.thumbnail_max_px)
                menu.append(
                    {
                        "object_id": obj.id,
                        "label": obj.label,
                        "confidence": obj.confidence,
                        "thumbnail_png_base64": base64.b64encode(imaging.encode_png(thumb)).decode("ascii"),
                        "width_px": obj.crop.width,
                        "height_px": obj.crop.height,
                    }
                )
            return menu

    def request_generation(self, session_id: str, object_ids, backend: str = None) -> list:
        session = self._get_session(session_id)
        with session.lock:
            if session.state != "detected":
                raise NotDetectedYet(f"session is in state {session.state}")
            by_id = {obj.id: obj for obj in session.objects}
            chosen = []
            for oid in object_ids:
                if oid not in by_id:
                    raise UnknownObject(f"no object {oid} in session {session_id}")
                chosen.append(by_id[oid])
            job_ids = []
            for obj in chosen:
                req = GenerationRequest(payload=encode_payload(obj))
                job = self.jobs.submit(req, backend=backend, on_success=self._post_process)
                job_ids.append(job.job_id)
            return job_ids

    def _post_process(self, job, mesh):
        """Worker-side hook: simplify to the vertex budget and export."""
        started = time.perf_counter()
        params = DecimationParams(
            target_vertices=self.config.mesh_target_vertices,
            preserve_boundary=self.config.mesh_preserve_boundary,
        )
        reduced = meshops.decimate(mesh, params)
        job.timings["simplify_ms"] = _ms(started)
        glb = meshops.export_gltf(reduced)
        with self._store_lock:
            self.assets[job.job_id] = glb
        self.metrics.record("conversion_ms", job.timings["conversion_ms"])
        self.metrics.record("simplify_ms", job.timings["simplify_ms"])
        return reduced

    def job_status(self, job_id: str) -> dict:
        job = self.jobs.get(job_id)
        if job is None:
            raise UnknownJob(f"no job {job_id}")
        return job.view()

    def fetch_asset(self, job_id: str) -> bytes:
        job = self.jobs.get(job_id)
        if job is None:
            raise UnknownJob(f"no job {job_id}")
        if job.state in ("queued", "running"):
            raise NotReady(f"job is {job.state}")
        if job.state == "failed":
            raise NotReady(f"job failed: {job.error}")
        started = time.perf_counter()
        with self._store_lock:
            body = self.assets.get(job_id)
            first = job_id not in self.asset_fetched
            self.asset_fetched.add(job_id)
        if body is None:
            raise NotReady("asset not materialized")
        if first and job.timings.get("load_render_ms") is None:
            # server-side serve duration; a client-posted sample replaces it
            job.timings["load_render_ms"] = _ms(started)
        return body

    def record_load_render(self, job_id: str, load_render_ms: float) -> None:
        job = self.jobs.get(job_id)
        if job is None:
            raise UnknownJob(f"no job {job_id}")
        job.timings["load_render_ms"] = int(load_render_ms)
        self.metrics.record("load_render_ms", load_render_ms)

    def shutdown(self):
        self.jobs.shutdown()


def _ms(start: float) -> int:
    return max(0, int(round((time.perf_counter() - start) * 1000.0)))


# --- HTTP layer ------------------------------------------------------------------

_STATUS_BY_ERROR = {
    "UnknownSession": 404,
    "UnknownJob": 404,
    "UnknownObject": 404,
    "NotDetectedYet": 409,
    "NotReady": 409,
    "IllegalState": 409,
    "StrokeTooShort": 422,
    "ZoneTooSmall": 422,
    "EmptyMask": 422,
    "MalformedImage": 400,
    "SessionLimitReached": 429,
    "QueueFull": 429,
    "BackendUnavailable": 502,
    "BackendTimeout": 504,
    "MalformedBackendResponse": 502,
}


class CreateCaptureBody(BaseModel):
    image_png_base64: str
    mode: str = "zone"


class StrokeBody(BaseModel):
    points: list


class GenerateBody(BaseModel):
    object_ids: list
    backend: str = None


class LoadRenderBody(BaseModel):
    job_id: str
    load_render_ms: float


class MetricsRecordBody(BaseModel):
    detection_ms: float = None
    conversion_ms: float = None
    simplify_ms: float = None
    load_render_ms: float = None
    gpu_util_pct: float = None
    gpu_mem_gb: float = None


def create_app(config: AppConfig = None, service: PipelineService = None) -> FastAPI:
    service = service or PipelineService(config)
    app = FastAPI(title="capture3d", version="0.1.0")
    app.state.service = service

    @app.exception_handler(PipelineError)
    async def pipeline_error_handler(_request: Request, exc: PipelineError):
        status = _STATUS_BY_ERROR.get(exc.code, 500)
        return JSONResponse(status_code=status, content={"error": exc.code, "detail": str(exc)})

    @app.post("/v1/captures", status_code=201)
    def create_capture(body: CreateCaptureBody):
        try:
            png = base64.b64decode(body.image_png_base64, validate=True)
        except Exception:
            raise MalformedImage("image_png_base64 is not valid base64") from None
        session = service.create_capture(png, body.mode)
        return {
            "session_id": session.session_id,
            "state": session.state,
            "mode": session.mode,
            "width": session.frame.width,
            "height": session.frame.height,
            "object_count": len(session.objects),
        }

    @app.post("/v1/captures/{session_id}/stroke")
    def append_stroke(session_id: str, body: StrokeBody):
        accepted = service.append_stroke(session_id, body.points)
        session = service._get_session(session_id)
        return {"accepted": accepted, "total": len(session.stroke.points)}

    @app.post("/v1/captures/{session_id}/finalize")
    def finalize(session_id: str):
        session = service.finalize_zone(session_id)
        return {
            "state": session.state,
            "zone": {
                "vertex_count": len(session.zone.vertices),
                "area_px2": session.zone.area_px,
                "vertices": session.zone.vertices.tolist(),
            },
            "object_count": len(session.objects),
            "detection_ms": session.detection_ms,
        }

    @app.get("/v1/captures/{session_id}/objects")
    def list_objects(session_id: str):
        return {"objects": service.list_objects(session_id)}

    @app.post("/v1/captures/{session_id}/generate", status_code=202)
    def generate(session_id: str, body: GenerateBody):
        job_ids = service.request_generation(session_id, body.object_ids, body.backend)
        return {"job_ids": job_ids}

    @app.get("/v1/jobs/{job_id}")
    def job_status(job_id: str):
        return service.job_status(job_id)

    @app.get("/v1/jobs/{job_id}/asset")
    def fetch_asset(job_id: str):
        body = service.fetch_asset(job_id)
        return Response(content=body, media_type="model/gltf-binary")

    @app.get("/v1/metrics")
    def metrics():
        return service.metrics.report()

    @app.post("/v1/metrics/load-render")
    def post_load_render(body: LoadRenderBody):
        service.record_load_render(body.job_id, body.load_render_ms)
        return {"ok": True}

    @app.post("/v1/metrics/records", status_code=202)
    def ingest_record(body: MetricsRecordBody):
        service.metrics.ingest(MetricsRecord(**body.model_dump()))
        return {"ok": True}

    _mount_ui(app)
    return app


def _mount_ui(app: FastAPI) -> None:
    """Serve the web client's build output when it exists."""
    import os

    from fastapi.staticfiles import StaticFiles

    here = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    for candidate in (os.path.join(here, "frontend", "dist"), os.environ.get("CAPTURE3D_UI_DIR", "")):
        if candidate and os.path.isdir(candidate):
            app.mount("/ui", StaticFiles(directory=candidate, html=True), name="ui")
            break
