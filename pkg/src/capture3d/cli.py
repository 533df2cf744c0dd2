"""Command-line entry points.

``capture3d serve``     run the HTTP server
``capture3d pipeline``  headless capture-to-asset run on one image
``capture3d eval``      SUS / ANOVA statistics over CSV or JSON input
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

from . import detection, imaging, meshops
from .config import load_config
from .detection import encode_payload, segment_detailed
from .evaluation import (
    GroupSummary,
    SusResponse,
    anova_from_raw,
    anova_from_summary,
    sus_mean,
    sus_score,
)
from .generation import GenerationRequest, stub_generate
from .lasso import Stroke, close_stroke
from .meshops import DecimationParams


def _parse_points(text: str):
    pts = []
    for chunk in text.replace(";", " ").split():
        x, y = chunk.split(",")
        pts.append((float(x), float(y)))
    return pts


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    cfg = load_config(args.config)
    if args.port is not None:
        cfg.port = args.port
    if args.host is not None:
        cfg.host = args.host
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    if args.backend:
        cfg.generator.backend = args.backend
    with open(args.image, "rb") as fh:
        frame = imaging.decode_png(fh.read())

    zone = None
    if args.zone_points:
        stroke = Stroke()
        stroke.append(_parse_points(args.zone_points))
        zone = close_stroke(stroke, cfg.min_zone_area_px2)
    elif args.detect_stroke:
        zone = detection.detect_stroke_zone(frame, cfg.detector)

    started = time.perf_counter()
    result = segment_detailed(frame, zone, cfg.detector)
    detection_ms = int((time.perf_counter() - started) * 1000)
    objects = result.objects
    print(f"detected {len(objects)} object(s) in {detection_ms} ms")

    os.makedirs(args.out, exist_ok=True)
    manifest = {"image": args.image, "detection_ms": detection_ms, "objects": []}
    params = DecimationParams(
        target_vertices=cfg.mesh_target_vertices,
        preserve_boundary=cfg.mesh_preserve_boundary,
    )
    for i, obj in enumerate(objects):
        stem = f"object_{i:02d}_{obj.label.replace(' ', '_')}"
        crop_path = os.path.join(args.out, stem + ".png")
        with open(crop_path, "wb") as fh:
            fh.write(imaging.encode_png(obj.crop))
        entry = {
            "label": obj.label,
            "confidence": obj.confidence,
            "bbox": [obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h],
            "crop": os.path.basename(crop_path),
        }
        if not args.no_generate:
            t0 = time.perf_counter()
            mesh = stub_generate(GenerationRequest(payload=encode_payload(obj)), cfg.generator)
            conversion_ms = int((time.perf_counter() - t0) * 1000)
            t1 = time.perf_counter()
            reduced = meshops.decimate(mesh, params)
            simplify_ms = int((time.perf_counter() - t1) * 1000)
            glb_path = os.path.join(args.out, stem + ".glb")
            with open(glb_path, "wb") as fh:
                fh.write(meshops.export_gltf(reduced))
            entry.update(
                {
                    "asset": os.path.basename(glb_path),
                    "vertices": reduced.vertex_count,
                    "faces": reduced.face_count,
                    "conversion_ms": conversion_ms,
                    "simplify_ms": simplify_ms,
                }
            )
            print(f"  {obj.label}: {reduced.vertex_count} verts -> {glb_path}")
        manifest["objects"].append(entry)
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {os.path.join(args.out, 'metrics.json')}")
    return 0


def _read_sus_csv(path: str):
    """CSV schema: header, then one row per participant:
    group label followed by the ten 1-5 item scores."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for line in reader:
            if not line:
                continue
            group = line[0].strip()
            values = [int(v) for v in line[1 : 1 + 10]]
            rows.append((group, SusResponse(values)))
    return rows


def cmd_eval(args) -> int:
    if args.stat == "sus":
        rows = _read_sus_csv(args.csv)
        scores = [(g, sus_score(r)) for g, r in rows]
        for g, s in scores:
            print(f"{g},{s}")
        print(f"mean,{sus_mean([r for _, r in rows])}")
        return 0
    # anova
    if args.summary:
        with open(args.summary, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        groups = [GroupSummary(n=g["n"], mean=g["mean"], variance=g["variance"]) for g in doc["groups"]]
        res = anova_from_summary(groups)
    else:
        rows = _read_sus_csv(args.csv)
        by_group = {}
        for g, r in rows:
            by_group.setdefault(g, []).append(sus_score(r))
        res = anova_from_raw(list(by_group.values()))
    print(
        json.dumps(
            {"F": res.f, "df_between": res.df_between, "df_within": res.df_within, "p": res.p}
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capture3d")
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP server")
    p_serve.add_argument("--config", default=None, help="YAML config path")
    p_serve.add_argument("--host", default=None)
    p_serve.add_argument("--port", type=int, default=None)
    p_serve.set_defaults(func=cmd_serve)

    p_pipe = sub.add_parser("pipeline", help="headless end-to-end run")
    p_pipe.add_argument("--image", required=True, help="input PNG")
    p_pipe.add_argument("--zone-points", default=None, help='"x,y x,y ..." lasso points')
    p_pipe.add_argument(
        "--detect-stroke",
        action="store_true",
        help="recover the zone from a red stroke drawn into the image",
    )
    p_pipe.add_argument("--backend", default=None, choices=["stub", "external"])
    p_pipe.add_argument("--out", default="out", help="output directory")
    p_pipe.add_argument("--config", default=None)
    p_pipe.add_argument("--no-generate", action="store_true", help="stop after detection")
    p_pipe.set_defaults(func=cmd_pipeline)

    p_eval = sub.add_parser("eval", help="usability statistics")
    p_eval.add_argument("stat", choices=["sus", "anova"])
    p_eval.add_argument("--csv", default=None, help="per-participant CSV (group + 10 items)")
    p_eval.add_argument("--summary", default=None, help="JSON group summaries for ANOVA")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "eval" and not (args.csv or args.summary):
        print("eval requires --csv or --summary", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
