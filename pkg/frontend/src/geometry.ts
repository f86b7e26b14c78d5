/**
 * Cursor geometry, client side.
 *
 * The pointer is encoded as natural-neighbor Laplace weights over the shared
 * node positions (weight = shared-Voronoi-edge-length / distance, normalized)
 * so the receiving environment can rebuild it against its own layout. This
 * mirrors the server's computation and is validated against server-generated
 * test vectors; only node ids and weights ever leave the client.
 */

import type { Vec2, Vec3 } from "./protocol.js";

export type WeightEntry = [string, number];

const COINCIDENT_EPS = 1e-9;
export const FAR_CLIP = 50.0;

function dist(a: Vec2, b: Vec2): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}

function cross(o: Vec2, a: Vec2, b: Vec2): number {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

function convexHull(points: Vec2[]): Vec2[] {
  const pts = [...points].sort((p, q) => p[0] - q[0] || p[1] - q[1]);
  const build = (seq: Vec2[]): Vec2[] => {
    const out: Vec2[] = [];
    for (const p of seq) {
      while (out.length >= 2 && cross(out[out.length - 2]!, out[out.length - 1]!, p) <= 0) out.pop();
      out.push(p);
    }
    return out;
  };
  const lower = build(pts);
  const upper = build([...pts].reverse());
  return [...lower.slice(0, -1), ...upper.slice(0, -1)];
}

function strictlyInsideHull(q: Vec2, hull: Vec2[], scale: number): boolean {
  if (hull.length < 3) return false;
  const eps = 1e-12 * scale * scale;
  for (let i = 0; i < hull.length; i++) {
    if (cross(hull[i]!, hull[(i + 1) % hull.length]!, q) <= eps) return false;
  }
  return true;
}

function inverseDistanceEntries(q: Vec2, ids: string[], pts: Vec2[], k?: number): WeightEntry[] {
  const order = ids.map((_, i) => i).sort((a, b) => dist(pts[a]!, q) - dist(pts[b]!, q));
  const picked = k === undefined ? order : order.slice(0, k);
  const scale = Math.max(...pts.flat().map(Math.abs), 0);
  const d0 = dist(pts[picked[0]!]!, q);
  if (d0 <= COINCIDENT_EPS * (1 + scale)) return [[ids[picked[0]!]!, 1.0]];
  let total = 0;
  const inv = picked.map((i) => {
    const w = 1 / dist(pts[i]!, q);
    total += w;
    return [ids[i]!, w] as WeightEntry;
  });
  return inv.map(([id, w]) => [id, w / total] as WeightEntry).sort((a, b) => (a[0] < b[0] ? -1 : 1));
}

/**
 * Laplace natural-neighbor weights of `query` over `sites`, computed by
 * clipping the query's would-be Voronoi cell with every bisector half-plane.
 * Fallbacks (out of hull: two nearest by inverse distance; degenerate cloud:
 * all sites by inverse distance; at a site: that site alone) match the
 * server bit for bit in behavior.
 */
export function naturalNeighborWeights2d(query: Vec2, sites: Map<string, Vec2>): WeightEntry[] {
  if (sites.size === 0) throw new Error("no sites");
  const ids = [...sites.keys()].sort();
  const pts = ids.map((id) => sites.get(id)!);
  const scale = Math.max(...pts.flat().map(Math.abs), Math.abs(query[0]), Math.abs(query[1])) + 1;

  let nearest = 0;
  for (let i = 1; i < pts.length; i++) if (dist(pts[i]!, query) < dist(pts[nearest]!, query)) nearest = i;
  if (dist(pts[nearest]!, query) <= COINCIDENT_EPS * scale) return [[ids[nearest]!, 1.0]];

  if (ids.length < 3) return inverseDistanceEntries(query, ids, pts);
  const hull = convexHull(pts);
  if (hull.length < 3) return inverseDistanceEntries(query, ids, pts);
  if (!strictlyInsideHull(query, hull, scale)) return inverseDistanceEntries(query, ids, pts, 2);

  // Clip a big box around the query by each bisector half-plane, tracking
  // which site generated each surviving edge.
  const r = 8 * scale + 1;
  let verts: Vec2[] = [
    [query[0] - r, query[1] - r],
    [query[0] + r, query[1] - r],
    [query[0] + r, query[1] + r],
    [query[0] - r, query[1] + r],
  ];
  let labels: number[] = [-1, -1, -1, -1];
  for (let si = 0; si < pts.length; si++) {
    const s = pts[si]!;
    const ux = s[0] - query[0];
    const uy = s[1] - query[1];
    const mx = (s[0] + query[0]) / 2;
    const my = (s[1] + query[1]) / 2;
    const f = verts.map((v) => (v[0] - mx) * ux + (v[1] - my) * uy);
    const newVerts: Vec2[] = [];
    const newLabels: number[] = [];
    for (let i = 0; i < verts.length; i++) {
      const j = (i + 1) % verts.length;
      const fa = f[i]!;
      const fb = f[j]!;
      const va = verts[i]!;
      const vb = verts[j]!;
      if (fa <= 0) {
        newVerts.push(va);
        newLabels.push(labels[i]!);
        if (fb > 0) {
          const t = fa / (fa - fb);
          newVerts.push([va[0] + t * (vb[0] - va[0]), va[1] + t * (vb[1] - va[1])]);
          newLabels.push(si);
        }
      } else if (fb <= 0) {
        const t = fa / (fa - fb);
        newVerts.push([va[0] + t * (vb[0] - va[0]), va[1] + t * (vb[1] - va[1])]);
        newLabels.push(labels[i]!);
      }
    }
    verts = newVerts;
    labels = newLabels;
    if (verts.length < 3) return inverseDistanceEntries(query, ids, pts, 2);
  }
  if (labels.some((l) => l < 0)) return inverseDistanceEntries(query, ids, pts, 2);

  const edgeLen = new Map<number, number>();
  for (let i = 0; i < verts.length; i++) {
    const len = dist(verts[i]!, verts[(i + 1) % verts.length]!);
    if (len > 0) edgeLen.set(labels[i]!, (edgeLen.get(labels[i]!) ?? 0) + len);
  }
  let total = 0;
  const raw: WeightEntry[] = [];
  for (const [si, len] of edgeLen) {
    const w = len / dist(pts[si]!, query);
    if (w > 0) {
      raw.push([ids[si]!, w]);
      total += w;
    }
  }
  if (total <= 0) return inverseDistanceEntries(query, ids, pts, 2);
  return raw.map(([id, w]) => [id, w / total] as WeightEntry).sort((a, b) => (a[0] < b[0] ? -1 : 1));
}

/** Rebuild a cursor from hint weights and local positions: sum of w_i * p_i. */
export function relocateCursor(entries: { node: string; w: number }[], positions: Map<string, Vec2>): Vec2 | null {
  let x = 0;
  let y = 0;
  for (const { node, w } of entries) {
    const p = positions.get(node);
    if (!p) return null; // stale hint: drop the cursor for this frame
    x += p[0] * w;
    y += p[1] * w;
  }
  return [x, y];
}

export interface MapTransform {
  scale: number;
  offset: Vec2;
}

export function applyTransform(t: MapTransform, p: Vec2): Vec2 {
  return [p[0] * t.scale + t.offset[0], p[1] * t.scale + t.offset[1]];
}

/** Uniform-scale inset mapping a world bounding box into a minimap rect. */
export function fitTransform(
  bounds: { minX: number; minY: number; maxX: number; maxY: number },
  width: number,
  height: number,
  pad = 6,
): MapTransform {
  const spanX = Math.max(bounds.maxX - bounds.minX, 1e-9);
  const spanY = Math.max(bounds.maxY - bounds.minY, 1e-9);
  const scale = Math.min((width - 2 * pad) / spanX, (height - 2 * pad) / spanY);
  const cx = (bounds.minX + bounds.maxX) / 2;
  const cy = (bounds.minY + bounds.maxY) / 2;
  return { scale, offset: [width / 2 - cx * scale, height / 2 - cy * scale] };
}

function rayPlanePoint(apex: Vec3, dir: Vec3): Vec2 {
  const dz = dir[2];
  if (Math.abs(dz) > 1e-12) {
    const t = -apex[2] / dz;
    if (t > 0) return [apex[0] + t * dir[0], apex[1] + t * dir[1]];
  }
  return [apex[0] + FAR_CLIP * dir[0], apex[1] + FAR_CLIP * dir[1]];
}

function rotate(q: [number, number, number, number], v: Vec3): Vec3 {
  const [w, x, y, z] = q;
  const n = Math.hypot(w, x, y, z) || 1;
  const [qw, qx, qy, qz] = [w / n, x / n, y / n, z / n];
  const [vx, vy, vz] = v;
  return [
    (1 - 2 * (qy * qy + qz * qz)) * vx + 2 * (qx * qy - qw * qz) * vy + 2 * (qx * qz + qw * qy) * vz,
    2 * (qx * qy + qw * qz) * vx + (1 - 2 * (qx * qx + qz * qz)) * vy + 2 * (qy * qz - qw * qx) * vz,
    2 * (qx * qz - qw * qy) * vx + 2 * (qy * qz + qw * qx) * vy + (1 - 2 * (qx * qx + qy * qy)) * vz,
  ];
}

export interface FrustumFootprint {
  polygon: Vec2[];
  ray: [Vec2, Vec2];
}

/**
 * Project a peer's view frustum onto the graph plane (z = 0): corner-ray
 * intersections plus the central head-ray segment, both in world coords.
 */
export function frustumFootprint(pose: {
  position: Vec3;
  orientation: [number, number, number, number];
  fovVertical: number;
  fovHorizontal: number;
}): FrustumFootprint {
  const tx = Math.tan(pose.fovHorizontal / 2);
  const ty = Math.tan(pose.fovVertical / 2);
  const corners: Vec3[] = (
    [
      [-tx, -ty, -1],
      [tx, -ty, -1],
      [tx, ty, -1],
      [-tx, ty, -1],
    ] as Vec3[]
  ).map((v) => {
    const n = Math.hypot(v[0], v[1], v[2]);
    return rotate(pose.orientation, [v[0] / n, v[1] / n, v[2] / n]);
  });
  const polygon = corners.map((d) => rayPlanePoint(pose.position, d));
  const sum: Vec3 = [
    corners.reduce((a, c) => a + c[0], 0),
    corners.reduce((a, c) => a + c[1], 0),
    corners.reduce((a, c) => a + c[2], 0),
  ];
  const n = Math.hypot(sum[0], sum[1], sum[2]) || 1;
  const central: Vec3 = [sum[0] / n, sum[1] / n, sum[2] / n];
  return {
    polygon,
    ray: [[pose.position[0], pose.position[1]], rayPlanePoint(pose.position, central)],
  };
}

/**
 * Synthesize a top-down head pose from the visible viewport rectangle on the
 * graph plane, so spatial users see where a desktop user is looking. The
 * camera floats above the viewport center looking straight down (-z), with
 * the FOV chosen so the frustum's z=0 footprint is exactly the viewport.
 */
export function syntheticTopDownPose(view: { minX: number; minY: number; maxX: number; maxY: number }): {
  position: Vec3;
  orientation: [number, number, number, number];
  fovVertical: number;
  fovHorizontal: number;
} {
  const cx = (view.minX + view.maxX) / 2;
  const cy = (view.minY + view.maxY) / 2;
  const halfW = Math.max((view.maxX - view.minX) / 2, 1e-6);
  const halfH = Math.max((view.maxY - view.minY) / 2, 1e-6);
  const height = Math.max(halfW, halfH); // keeps both FOV angles under 90 degrees
  return {
    position: [cx, cy, height],
    orientation: [1, 0, 0, 0],
    fovVertical: 2 * Math.atan(halfH / height),
    fovHorizontal: 2 * Math.atan(halfW / height),
  };
}
