/**
 * Minimal binary glTF reader for the server's asset subset: one mesh, one
 * triangle primitive, float32 POSITION, scalar indices (uint8/16/32).
 */

export interface ParsedMesh {
  positions: Float32Array; // xyz triples
  indices: Uint32Array; // triangle list
  vertexCount: number;
  triangleCount: number;
  boundsMin: [number, number, number];
  boundsMax: [number, number, number];
}

const GLB_MAGIC = 0x46546c67;
const CHUNK_JSON = 0x4e4f534a;
const CHUNK_BIN = 0x004e4942;

interface GltfDoc {
  meshes: { primitives: { attributes: { POSITION: number }; indices?: number; mode?: number }[] }[];
  accessors: {
    bufferView: number;
    byteOffset?: number;
    componentType: number;
    count: number;
    type: string;
  }[];
  bufferViews: { byteOffset?: number; byteLength: number; byteStride?: number }[];
}

const TYPE_WIDTHS: Record<string, number> = { SCALAR: 1, VEC2: 2, VEC3: 3, VEC4: 4 };

export function parseGlb(buffer: ArrayBuffer): ParsedMesh {
  const view = new DataView(buffer);
  if (buffer.byteLength < 20 || view.getUint32(0, true) !== GLB_MAGIC) {
    throw new Error("not a binary glTF file");
  }
  if (view.getUint32(4, true) !== 2) {
    throw new Error("unsupported glTF version");
  }
  let offset = 12;
  let doc: GltfDoc | null = null;
  let bin: ArrayBuffer = new ArrayBuffer(0);
  while (offset + 8 <= buffer.byteLength) {
    const length = view.getUint32(offset, true);
    const type = view.getUint32(offset + 4, true);
    const chunk = buffer.slice(offset + 8, offset + 8 + length);
    offset += 8 + length;
    if (type === CHUNK_JSON) {
      doc = JSON.parse(new TextDecoder().decode(chunk)) as GltfDoc;
    } else if (type === CHUNK_BIN) {
      bin = chunk;
    }
  }
  if (!doc) throw new Error("GLB carries no JSON chunk");
  const prim = doc.meshes?.[0]?.primitives?.[0];
  if (!prim) throw new Error("GLB has no mesh primitive");
  if ((prim.mode ?? 4) !== 4) throw new Error("only triangle primitives supported");

  const positions = readAccessor(doc, bin, prim.attributes.POSITION);
  if (!(positions instanceof Float32Array)) throw new Error("POSITION must be float32");
  let indices: Uint32Array;
  if (prim.indices !== undefined) {
    const raw = readAccessor(doc, bin, prim.indices);
    indices = raw instanceof Uint32Array ? raw : Uint32Array.from(raw as ArrayLike<number>);
  } else {
    indices = Uint32Array.from({ length: positions.length / 3 }, (_, i) => i);
  }
  if (indices.length % 3 !== 0) throw new Error("index count not a multiple of 3");

  const boundsMin: [number, number, number] = [Infinity, Infinity, Infinity];
  const boundsMax: [number, number, number] = [-Infinity, -Infinity, -Infinity];
  for (let i = 0; i < positions.length; i += 3) {
    for (let k = 0; k < 3; k++) {
      const v = positions[i + k];
      if (v < boundsMin[k]) boundsMin[k] = v;
      if (v > boundsMax[k]) boundsMax[k] = v;
    }
  }
  return {
    positions,
    indices,
    vertexCount: positions.length / 3,
    triangleCount: indices.length / 3,
    boundsMin,
    boundsMax,
  };
}

function readAccessor(doc: GltfDoc, bin: ArrayBuffer, idx: number) {
  const acc = doc.accessors[idx];
  const bufView = doc.bufferViews[acc.bufferView];
  if (bufView.byteStride) throw new Error("interleaved buffer views unsupported");
  const width = TYPE_WIDTHS[acc.type];
  if (!width) throw new Error(`unsupported accessor type ${acc.type}`);
  const start = (bufView.byteOffset ?? 0) + (acc.byteOffset ?? 0);
  const count = acc.count * width;
  switch (acc.componentType) {
    case 5121:
      return new Uint8Array(bin, start, count);
    case 5123:
      return new Uint16Array(bin, start, count);
    case 5125:
      return new Uint32Array(bin, start, count);
    case 5126:
      return new Float32Array(bin, start, count);
    default:
      throw new Error(`unsupported componentType ${acc.componentType}`);
  }
}

/** Unique undirected edges of the triangle list (for wireframe drawing). */
export function wireframeEdges(indices: Uint32Array): Uint32Array {
  const seen = new Set<string>();
  const edges: number[] = [];
  for (let t = 0; t < indices.length; t += 3) {
    for (let k = 0; k < 3; k++) {
      const a = indices[t + k];
      const b = indices[t + ((k + 1) % 3)];
      const key = a < b ? `${a}:${b}` : `${b}:${a}`;
      if (!seen.has(key)) {
        seen.add(key);
        edges.push(Math.min(a, b), Math.max(a, b));
      }
    }
  }
  return Uint32Array.from(edges);
}
