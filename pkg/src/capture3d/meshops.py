"""Vertex-budget mesh simplification (quadric error metric edge collapse)
and asset interchange: binary glTF 2.0 and a small OBJ subset.

Decimation is single-threaded per mesh (it walks a priority queue);
distinct meshes can be processed concurrently.  Internally everything is
float64; exported assets quantize positions to float32.
"""

from __future__ import annotations

import heapq
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFace, MalformedAsset, MeshTooLarge, NotManifold, TargetTooSmall
from .generation import Mesh, validate_mesh

_DET_EPS = 1e-12
_AREA_EPS = 1e-12


@dataclass
class DecimationParams:
    target_vertices: int = 2048
    max_error: float = None  # m^2; None disables the cost ceiling
    preserve_boundary: bool = True

    def __post_init__(self):
        if self.target_vertices < 4:
            raise TargetTooSmall("target_vertices must be at least 4")


@dataclass
class DecimationStats:
    """Debug audit of an executed decimation."""

    collapses: int = 0
    rejected: int = 0
    executed_costs: list = field(default_factory=list)


# --- quadrics ---------------------------------------------------------------


def _face_planes(mesh: Mesh):
    v = mesh.vertices
    p0 = v[mesh.faces[:, 0]]
    e1 = v[mesh.faces[:, 1]] - p0
    e2 = v[mesh.faces[:, 2]] - p0
    n = np.cross(e1, e2)
    norms = np.linalg.norm(n, axis=1)
    return n, norms, p0


def compute_quadrics(mesh: Mesh) -> np.ndarray:
    """Per-vertex 4x4 quadric: sum of the fundamental error quadrics of the
    planes of every incident face.  Zero-area faces contribute nothing; if
    the mesh has faces but every one is degenerate, that is an error."""
    n, norms, p0 = _face_planes(mesh)
    usable = norms > _AREA_EPS
    if len(mesh.faces) and not usable.any():
        raise DegenerateFace("every face of the mesh has zero area")
    quadrics = np.zeros((mesh.vertex_count, 4, 4), dtype=np.float64)
    unit = np.zeros_like(n)
    unit[usable] = n[usable] / norms[usable, None]
    d = -np.einsum("ij,ij->i", unit, p0)
    planes = np.concatenate([unit, d[:, None]], axis=1)
    for f_idx in np.flatnonzero(usable):
        p = planes[f_idx]
        k = np.outer(p, p)
        for vi in mesh.faces[f_idx]:
            quadrics[vi] += k
    return quadrics


def quadric_error(q: np.ndarray, point) -> float:
    h = np.array([point[0], point[1], point[2], 1.0])
    return float(h @ q @ h)


def _optimal_position(q: np.ndarray, v1, v2):
    """Quadric-minimizing point, or the cheapest of {v1, v2, midpoint} when
    the 3x3 system is singular (|det| < 1e-12)."""
    a = q[:3, :3]
    b = -q[:3, 3]
    if abs(np.linalg.det(a)) >= _DET_EPS:
        p = np.linalg.solve(a, b)
        return p, quadric_error(q, p)
    best_p, best_c = None, None
    for cand in (v1, v2, (v1 + v2) / 2.0):
        c = quadric_error(q, cand)
        if best_c is None or c < best_c:
            best_p, best_c = np.asarray(cand, dtype=np.float64), c
    return best_p, best_c


# --- decimation --------------------------------------------------------------


class _MeshConn:
    """Mutable connectivity scratchpad for the collapse loop."""

    def __init__(self, mesh: Mesh):
        self.pos = mesh.vertices.copy()
        self.faces = [tuple(int(i) for i in f) for f in mesh.faces]
        self.face_alive = [True] * len(self.faces)
        self.vfaces = [set() for _ in range(len(self.pos))]
        for fi, f in enumerate(self.faces):
            for vi in f:
                self.vfaces[vi].add(fi)
        self.valive = [True] * len(self.pos)
        self.version = [0] * len(self.pos)

    def neighbors(self, u: int) -> set:
        out = set()
        for fi in self.vfaces[u]:
            if self.face_alive[fi]:
                out.update(self.faces[fi])
        out.discard(u)
        return out

    def boundary_vertices(self) -> set:
        counts = {}
        for fi, f in enumerate(self.faces):
            if not self.face_alive[fi]:
                continue
            for i in range(3):
                e = (min(f[i], f[(i + 1) % 3]), max(f[i], f[(i + 1) % 3]))
                counts[e] = counts.get(e, 0) + 1
        boundary = set()
        for (a, b), c in counts.items():
            if c == 1:
                boundary.add(a)
                boundary.add(b)
        return boundary

    def alive_count(self) -> int:
        return sum(self.valive)


def _link_condition(conn: _MeshConn, u: int, v: int) -> bool:
    """Edge (u, v) is collapsible only if the common neighbors of u and v
    are exactly the apex vertices of the faces containing the edge."""
    common = conn.neighbors(u) & conn.neighbors(v)
    apexes = set()
    for fi in conn.vfaces[u] & conn.vfaces[v]:
        if conn.face_alive[fi]:
            apexes.update(w for w in conn.faces[fi] if w not in (u, v))
    return common == apexes


def _collapse_is_geometric(conn: _MeshConn, u: int, v: int, p: np.ndarray) -> bool:
    """Reject position changes that flip a surviving face's normal or
    squash it below the degenerate-area floor."""
    for w in (u, v):
        for fi in conn.vfaces[w]:
            if not conn.face_alive[fi]:
                continue
            f = conn.faces[fi]
            if u in f and v in f:
                continue  # face dies with the collapse
            before = [conn.pos[i] for i in f]
            after = [p if i in (u, v) else conn.pos[i] for i in f]
            n_before = np.cross(before[1] - before[0], before[2] - before[0])
            n_after = np.cross(after[1] - after[0], after[2] - after[0])
            if np.linalg.norm(n_after) < 2.0 * _AREA_EPS:
                return False
            if np.dot(n_before, n_after) < 0.0:
                return False
    return True


def decimate_with_stats(mesh: Mesh, params: DecimationParams) -> tuple:
    """Iterative minimum-cost edge collapse down to the vertex budget.

    Stops at the target, when no legal collapse remains, or when the
    cheapest collapse would exceed ``max_error``.  Returns (mesh, stats).
    """
    report = validate_mesh(mesh)
    if not report.is_manifold_edge:
        raise NotManifold("decimation requires an edge-manifold mesh")
    if mesh.vertex_count <= params.target_vertices:
        return mesh, DecimationStats()

    conn = _MeshConn(mesh)
    quadrics = compute_quadrics(mesh)
    boundary = conn.boundary_vertices()
    stats = DecimationStats()

    heap = []
    counter = 0

    def push_edge(u: int, v: int):
        nonlocal counter
        if u > v:
            u, v = v, u
        q = quadrics[u] + quadrics[v]
        p, cost = _optimal_position(q, conn.pos[u], conn.pos[v])
        cost = max(cost, 0.0)  # PSD quadrics; clamp float noise
        heapq.heappush(heap, (cost, counter, u, v, conn.version[u], conn.version[v], p))
        counter += 1

    seen = set()
    for f in conn.faces:
        for i in range(3):
            e = (min(f[i], f[(i + 1) % 3]), max(f[i], f[(i + 1) % 3]))
            if e not in seen:
                seen.add(e)
                push_edge(*e)

    while conn.alive_count() > params.target_vertices and heap:
        cost, _, u, v, ver_u, ver_v, p = heapq.heappop(heap)
        if not (conn.valive[u] and conn.valive[v]):
            continue
        if ver_u != conn.version[u] or ver_v != conn.version[v]:
            continue  # stale entry
        if params.max_error is not None and cost > params.max_error:
            break
        if params.preserve_boundary and (u in boundary or v in boundary):
            stats.rejected += 1
            continue
        if not _link_condition(conn, u, v):
            stats.rejected += 1
            continue
        if not _collapse_is_geometric(conn, u, v, p):
            stats.rejected += 1
            continue

        # execute: merge v into u at position p
        dead = [fi for fi in (conn.vfaces[u] & conn.vfaces[v]) if conn.face_alive[fi]]
        for fi in dead:
            conn.face_alive[fi] = False
            for w in conn.faces[fi]:
                conn.vfaces[w].discard(fi)
        for fi in list(conn.vfaces[v]):
            if not conn.face_alive[fi]:
                conn.vfaces[v].discard(fi)
                continue
            conn.faces[fi] = tuple(u if w == v else w for w in conn.faces[fi])
            conn.vfaces[u].add(fi)
        conn.vfaces[v].clear()
        conn.valive[v] = False
        conn.pos[u] = p
        quadrics[u] = quadrics[u] + quadrics[v]
        conn.version[u] += 1
        conn.version[v] += 1
        if v in boundary:
            boundary.add(u)
        stats.collapses += 1
        stats.executed_costs.append(cost)

        for w in conn.neighbors(u):
            push_edge(u, w)

    remap = -np.ones(len(conn.pos), dtype=np.int64)
    alive_idx = [i for i, a in enumerate(conn.valive) if a]
    remap[alive_idx] = np.arange(len(alive_idx))
    new_faces = [
        tuple(remap[w] for w in conn.faces[fi])
        for fi in range(len(conn.faces))
        if conn.face_alive[fi]
    ]
    out = Mesh(vertices=conn.pos[alive_idx], faces=np.asarray(new_faces, dtype=np.int64).reshape(-1, 3))
    return out, stats


def decimate(mesh: Mesh, params: DecimationParams) -> Mesh:
    """Reduce the mesh to the target vertex count (no-op if already under)."""
    return decimate_with_stats(mesh, params)[0]


# --- glTF 2.0 binary ----------------------------------------------------------

_GLB_MAGIC = 0x46546C67
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942


def _pad(data: bytes, alignment: int, fill: bytes) -> bytes:
    rem = len(data) % alignment
    return data if rem == 0 else data + fill * (alignment - rem)


def export_gltf(mesh: Mesh) -> bytes:
    """Single-buffer .glb: one scene, one node, one mesh primitive,
    float32 positions, uint32 indices, little-endian, 4-byte-aligned."""
    if mesh.vertex_count >= 2**32 or mesh.face_count * 3 >= 2**32:
        raise MeshTooLarge("index range exceeds uint32")
    positions = mesh.vertices.astype("<f4")
    indices = mesh.faces.reshape(-1).astype("<u4")
    idx_bytes = indices.tobytes()
    pos_offset = (len(idx_bytes) + 3) // 4 * 4
    bin_chunk = idx_bytes + b"\x00" * (pos_offset - len(idx_bytes)) + positions.tobytes()
    header = {
        "asset": {"version": "2.0", "generator": "capture3d"},
        "scene": 0,
        "scenes": [{"nodes": [0]}],
        "nodes": [{"mesh": 0}],
        "meshes": [{"primitives": [{"attributes": {"POSITION": 1}, "indices": 0, "mode": 4}]}],
        "buffers": [{"byteLength": len(bin_chunk)}],
        "bufferViews": [
            {"buffer": 0, "byteOffset": 0, "byteLength": len(idx_bytes), "target": 34963},
            {"buffer": 0, "byteOffset": pos_offset, "byteLength": len(positions.tobytes()), "target": 34962},
        ],
        "accessors": [
            {"bufferView": 0, "componentType": 5125, "count": int(indices.size), "type": "SCALAR"},
            {
                "bufferView": 1,
                "componentType": 5126,
                "count": int(mesh.vertex_count),
                "type": "VEC3",
                "min": positions.min(axis=0).astype(float).tolist() if len(positions) else [0, 0, 0],
                "max": positions.max(axis=0).astype(float).tolist() if len(positions) else [0, 0, 0],
            },
        ],
    }
    json_chunk = _pad(json.dumps(header, separators=(",", ":")).encode("utf-8"), 4, b" ")
    bin_chunk = _pad(bin_chunk, 4, b"\x00")
    total = 12 + 8 + len(json_chunk) + 8 + len(bin_chunk)
    out = struct.pack("<III", _GLB_MAGIC, 2, total)
    out += struct.pack("<II", len(json_chunk), _CHUNK_JSON) + json_chunk
    out += struct.pack("<II", len(bin_chunk), _CHUNK_BIN) + bin_chunk
    return out


_COMPONENT_DTYPES = {5120: "<i1", 5121: "<u1", 5122: "<i2", 5123: "<u2", 5125: "<u4", 5126: "<f4"}
_TYPE_WIDTHS = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4}


def _read_accessor(doc: dict, blob: bytes, accessor_idx: int) -> np.ndarray:
    acc = doc["accessors"][accessor_idx]
    view = doc["bufferViews"][acc["bufferView"]]
    if view.get("byteStride") not in (None, 0):
        width = _TYPE_WIDTHS[acc["type"]] * np.dtype(_COMPONENT_DTYPES[acc["componentType"]]).itemsize
        if view["byteStride"] != width:
            raise MalformedAsset("interleaved buffer views are outside the supported subset")
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    dtype = _COMPONENT_DTYPES.get(acc["componentType"])
    if dtype is None:
        raise MalformedAsset(f"unsupported componentType {acc['componentType']}")
    width = _TYPE_WIDTHS[acc["type"]]
    count = acc["count"] * width
    arr = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
    return arr.reshape(acc["count"], width) if width > 1 else arr


def import_gltf(data: bytes) -> Mesh:
    """Load the first triangle primitive of a .glb produced by export_gltf
    (or any other exporter staying inside the same subset)."""
    try:
        magic, version, _length = struct.unpack_from("<III", data, 0)
    except struct.error:
        raise MalformedAsset("truncated GLB header") from None
    if magic != _GLB_MAGIC:
        raise MalformedAsset("not a binary glTF file (bad magic)")
    if version != 2:
        raise MalformedAsset(f"unsupported glTF version {version}")
    offset = 12
    doc = None
    blob = b""
    while offset + 8 <= len(data):
        chunk_len, chunk_type = struct.unpack_from("<II", data, offset)
        offset += 8
        chunk = data[offset : offset + chunk_len]
        offset += chunk_len
        if chunk_type == _CHUNK_JSON:
            try:
                doc = json.loads(chunk.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise MalformedAsset(f"bad JSON chunk: {exc}") from None
        elif chunk_type == _CHUNK_BIN:
            blob = chunk
    if doc is None:
        raise MalformedAsset("GLB carries no JSON chunk")
    try:
        prim = doc["meshes"][0]["primitives"][0]
        if prim.get("mode", 4) != 4:
            raise MalformedAsset("only triangle primitives are supported")
        positions = _read_accessor(doc, blob, prim["attributes"]["POSITION"]).astype(np.float64)
        if "indices" in prim:
            indices = _read_accessor(doc, blob, prim["indices"]).astype(np.int64)
        else:
            indices = np.arange(len(positions), dtype=np.int64)
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedAsset(f"GLB structure outside supported subset: {exc}") from None
    if indices.size % 3 != 0:
        raise MalformedAsset("index count is not a multiple of 3")
    return Mesh(vertices=positions, faces=indices.reshape(-1, 3))


# --- OBJ text -------------------------------------------------------------------


def export_obj(mesh: Mesh) -> str:
    lines = ["# capture3d mesh"]
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return "\n".join(lines) + "\n"


def import_obj(text: str) -> Mesh:
    """v/f subset; polygon faces are fan-triangulated, 1-based indices
    (negative indices count from the end, per the OBJ convention)."""
    verts = []
    faces = []
    for ln, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            try:
                verts.append(tuple(float(c) for c in parts[1:4]))
            except ValueError:
                raise MalformedAsset(f"bad vertex on line {ln}") from None
            if len(parts) < 4:
                raise MalformedAsset(f"vertex with fewer than 3 coordinates on line {ln}")
        elif parts[0] == "f":
            try:
                raw = [int(p.split("/")[0]) for p in parts[1:]]
            except ValueError:
                raise MalformedAsset(f"bad face on line {ln}") from None
            if len(raw) < 3:
                raise MalformedAsset(f"face with fewer than 3 vertices on line {ln}")
            idx = []
            for r in raw:
                if r == 0:
                    raise MalformedAsset(f"zero face index on line {ln}")
                i = r - 1 if r > 0 else len(verts) + r
                if not 0 <= i < len(verts):
                    raise MalformedAsset(f"face index {r} out of range on line {ln}")
                idx.append(i)
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # other keywords (vn, vt, o, g, usemtl, ...) are ignored
    if not verts:
        raise MalformedAsset("OBJ has no vertices")
    return Mesh(vertices=np.asarray(verts, dtype=np.float64), faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3))
