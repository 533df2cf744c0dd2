"""Application configuration: YAML file plus environment overrides.

Only a handful of deploy-relevant knobs have environment variables
(documented in the README); everything else comes from the file or the
dataclass defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .detection import DetectorConfig
from .generation import GeneratorConfig


@dataclass
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8400
    session_ttl_s: float = 600.0
    max_sessions: int = 256
    min_zone_area_px2: float = 400.0
    thumbnail_max_px: int = 128
    asset_dir: str = None  # optional spill directory for .glb bodies
    mesh_target_vertices: int = 2048
    mesh_preserve_boundary: bool = True
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)


_ENV_OVERRIDES = {
    "CAPTURE3D_HOST": ("host", str),
    "CAPTURE3D_PORT": ("port", int),
    "CAPTURE3D_SESSION_TTL_S": ("session_ttl_s", float),
    "CAPTURE3D_MESH_TARGET_VERTICES": ("mesh_target_vertices", int),
    "CAPTURE3D_DETECTOR_BACKEND": ("detector.backend", str),
    "CAPTURE3D_DETECTOR_URL": ("detector.external_url", str),
    "CAPTURE3D_CONFIDENCE_THRESHOLD": ("detector.confidence_threshold", float),
    "CAPTURE3D_GENERATOR_BACKEND": ("generator.backend", str),
    "CAPTURE3D_GENERATOR_URL": ("generator.external_url", str),
    "CAPTURE3D_WORKERS": ("generator.workers", int),
}


def _apply(cfg: AppConfig, dotted: str, value):
    target = cfg
    *path, leaf = dotted.split(".")
    for part in path:
        target = getattr(target, part)
    setattr(target, leaf, value)


def load_config(path: str = None, env=None) -> AppConfig:
    """Build the runtime config from an optional YAML file and env vars."""
    cfg = AppConfig()
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        server = doc.get("server", {})
        for key in ("host", "port", "session_ttl_s", "max_sessions"):
            if key in server:
                setattr(cfg, key, server[key])
        zone = doc.get("zone", {})
        if "min_area_px2" in zone:
            cfg.min_zone_area_px2 = float(zone["min_area_px2"])
        det = doc.get("detector", {})
        for key in ("backend", "external_url", "confidence_threshold", "timeout_ms",
                    "crop_padding_px", "zone_min_fraction", "stroke_s_min", "stroke_v_min"):
            if key in det:
                setattr(cfg.detector, key, det[key])
        if "stroke_hue_ranges" in det:
            cfg.detector.stroke_hue_ranges = tuple(tuple(r) for r in det["stroke_hue_ranges"])
        gen = doc.get("generator", {})
        for key in ("backend", "external_url", "timeout_ms", "depth_policy", "depth_m",
                    "scale_m_per_px", "workers", "max_pending"):
            if key in gen:
                setattr(cfg.generator, key, gen[key])
        mesh = doc.get("mesh", {})
        if "target_vertices" in mesh:
            cfg.mesh_target_vertices = int(mesh["target_vertices"])
        if "preserve_boundary" in mesh:
            cfg.mesh_preserve_boundary = bool(mesh["preserve_boundary"])
        ui = doc.get("ui", {})
        if "thumbnail_max_px" in ui:
            cfg.thumbnail_max_px = int(ui["thumbnail_max_px"])
        if "asset_dir" in doc.get("server", {}):
            cfg.asset_dir = server["asset_dir"]
    env = os.environ if env is None else env
    for var, (dotted, cast) in _ENV_OVERRIDES.items():
        if var in env:
            _apply(cfg, dotted, cast(env[var]))
    return cfg
