"""Cross-environment presence geometry.

The cursor bridge works by expressing a pointer position as natural-neighbor
weights over the shared graph nodes: insert the query point into the Voronoi
diagram of the node positions, take the sites whose cells border the query's
cell, and weight each by (shared Voronoi edge length) / (distance to the
site) — the Laplace (non-Sibsonian) form. Only (node id, weight) pairs travel
over the wire; the receiving environment rebuilds the cursor from its own
positions for those nodes. Because Laplace weights reproduce linear
functions, the rebuilt point is geometrically faithful.

The query cell is computed directly by half-plane clipping: the cell of q in
Voronoi(sites + {q}) is the intersection of the bisector half-planes between
q and every site. Each surviving polygon edge is labeled with the site that
generated it, which yields the natural neighbors and their shared edge
lengths in one pass, with no global triangulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .graph import GraphState
from .model import CursorHint, HeadPose, UserSession


class EmptySitesError(ValueError):
    """No usable sites for interpolation (none given, or all behind viewer)."""


class DegenerateFrustumError(ValueError):
    """Frustum rays are not unit length, or the apex angle collapses."""


class UnknownNodeError(KeyError):
    """A cursor hint references a node the receiver no longer has."""


COINCIDENT_EPS = 1e-9  # relative to site cloud scale
FAR_CLIP = 50.0  # ray-plane clip distance for rays parallel to the plane


# ---------------------------------------------------------------------------
# Natural-neighbor Laplace weights in the plane
# ---------------------------------------------------------------------------


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counterclockwise, no duplicate endpoint."""
    order = np.lexsort((points[:, 1], points[:, 0]))
    pts = points[order]

    def build(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _strictly_inside_hull(q: np.ndarray, hull: np.ndarray, scale: float) -> bool:
    if len(hull) < 3:
        return False
    eps = 1e-12 * scale * scale
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        if _cross(a, b, q) <= eps:
            return False
    return True


def _clip_cell(q: np.ndarray, sites: np.ndarray, scale: float):
    """Clip a huge box around q by every bisector half-plane.

    Returns (vertices, edge_sites): vertices[i] -> vertices[i+1] is an edge
    lying on the bisector of q and sites[edge_sites[i]]; -1 marks a surviving
    box edge, which means the cell is unbounded.
    """
    r = 8.0 * scale + 1.0
    verts = [
        q + np.array([-r, -r]),
        q + np.array([r, -r]),
        q + np.array([r, r]),
        q + np.array([-r, r]),
    ]
    labels = [-1, -1, -1, -1]

    for si in range(len(sites)):
        s = sites[si]
        u = s - q
        m = (s + q) / 2.0
        # keep f(x) = (x - m) . u <= 0  (the points closer to q)
        f = [float(np.dot(v - m, u)) for v in verts]
        new_verts: list[np.ndarray] = []
        new_labels: list[int] = []
        n = len(verts)
        for i in range(n):
            j = (i + 1) % n
            fa, fb = f[i], f[j]
            if fa <= 0.0:
                new_verts.append(verts[i])
                new_labels.append(labels[i])
                if fb > 0.0:
                    t = fa / (fa - fb)
                    new_verts.append(verts[i] + t * (verts[j] - verts[i]))
                    new_labels.append(si)  # edge starting here lies on this bisector
            elif fb <= 0.0:
                t = fa / (fa - fb)
                new_verts.append(verts[i] + t * (verts[j] - verts[i]))
                new_labels.append(labels[i])
        verts, labels = new_verts, new_labels
        if len(verts) < 3:
            return [], []
    return verts, labels


def _inverse_distance_entries(
    q: np.ndarray, ids: Sequence[str], sites: np.ndarray, k: Optional[int] = None
) -> list[tuple[str, float]]:
    d = np.linalg.norm(sites - q, axis=1)
    order = np.argsort(d, kind="stable")
    if k is not None:
        order = order[:k]
    if d[order[0]] <= COINCIDENT_EPS * (1.0 + float(np.abs(sites).max())):
        return [(ids[int(order[0])], 1.0)]
    inv = 1.0 / d[order]
    inv /= inv.sum()
    return sorted(((ids[int(i)], float(w)) for i, w in zip(order, inv)), key=lambda e: e[0])


def natural_neighbor_weights_2d(
    query: tuple[float, float],
    sites: Mapping[str, tuple[float, float]],
) -> list[tuple[str, float]]:
    """Laplace natural-neighbor weights of ``query`` over ``sites``.

    For a query strictly inside the convex hull of at least 3 non-collinear
    sites, returns the natural neighbors with weights proportional to
    shared-Voronoi-edge-length / distance, normalized to sum 1. Degenerate
    inputs fall back: out-of-hull queries use inverse-distance over the two
    nearest sites, collinear or sub-3-site clouds use inverse-distance over
    all sites, and a query at a site returns that site with weight 1.
    """
    if not sites:
        raise EmptySitesError("no sites")
    ids = sorted(sites)
    pts = np.array([sites[i] for i in ids], dtype=float)
    q = np.array(query, dtype=float)
    scale = float(np.abs(np.concatenate([pts.ravel(), q])).max()) + 1.0

    # Exactness at data sites (also avoids the 1/d singularity).
    d = np.linalg.norm(pts - q, axis=1)
    nearest = int(np.argmin(d))
    if d[nearest] <= COINCIDENT_EPS * scale:
        return [(ids[nearest], 1.0)]

    if len(ids) < 3:
        return _inverse_distance_entries(q, ids, pts)
    hull = _convex_hull(pts)
    if len(hull) < 3:
        return _inverse_distance_entries(q, ids, pts)
    if not _strictly_inside_hull(q, hull, scale):
        return _inverse_distance_entries(q, ids, pts, k=2)

    verts, labels = _clip_cell(q, pts, scale)
    if not verts or any(l < 0 for l in labels):
        # Numerically on the hull boundary: treat as out-of-hull.
        return _inverse_distance_entries(q, ids, pts, k=2)

    edge_len: dict[int, float] = {}
    n = len(verts)
    for i in range(n):
        length = float(np.linalg.norm(verts[(i + 1) % n] - verts[i]))
        if length > 0.0:
            edge_len[labels[i]] = edge_len.get(labels[i], 0.0) + length

    weights = {si: float(ln / d[si]) for si, ln in edge_len.items() if ln / d[si] > 0.0}
    total = sum(weights.values())
    if total <= 0.0:
        return _inverse_distance_entries(q, ids, pts, k=2)
    return sorted(
        ((ids[si], w / total) for si, w in weights.items()), key=lambda e: e[0]
    )


# ---------------------------------------------------------------------------
# 3D ray cursors
# ---------------------------------------------------------------------------


def quaternion_rotation_matrix(qw: float, qx: float, qy: float, qz: float) -> np.ndarray:
    n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = qw / n, qx / n, qy / n, qz / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def ray_cursor_weights_3d(
    head_pose: HeadPose,
    ray: tuple[tuple[float, float, float], tuple[float, float, float]],
    sites3: Mapping[str, tuple[float, float, float]],
) -> list[tuple[str, float]]:
    """Natural-neighbor weights for a pointing ray in a 3D scene.

    Sites are perspective-projected onto the viewer's image plane (camera
    looks along -z of the head orientation; projection center is the ray
    origin, so a ray through a node's center always lands exactly on that
    node's projection). Sites behind the viewer are excluded; the projected
    ray direction is the 2D query.
    """
    if not sites3:
        raise EmptySitesError("no sites")
    origin, direction = (np.array(ray[0], dtype=float), np.array(ray[1], dtype=float))
    rot = quaternion_rotation_matrix(*head_pose.orientation)
    to_cam = rot.T

    d_cam = to_cam @ direction
    forward = -d_cam[2]
    if forward <= 1e-12:
        raise ValueError("ray does not point toward the image plane")
    q2 = (d_cam[0] / forward, d_cam[1] / forward)

    projected: dict[str, tuple[float, float]] = {}
    for nid in sorted(sites3):
        v = to_cam @ (np.array(sites3[nid], dtype=float) - origin)
        depth = -v[2]
        if depth > 1e-9:
            projected[nid] = (v[0] / depth, v[1] / depth)
    if not projected:
        raise EmptySitesError("all sites behind the viewer")
    return natural_neighbor_weights_2d(q2, projected)


def relocate_cursor(
    hint: CursorHint, target_positions: Mapping[str, Sequence[float]]
) -> tuple[float, ...]:
    """Rebuild a cursor in the receiving environment: sum of w_i * position_i."""
    if not hint.entries:
        raise ValueError("empty cursor hint")
    acc: Optional[np.ndarray] = None
    for node_id, w in hint.entries:
        pos = target_positions.get(node_id)
        if pos is None:
            raise UnknownNodeError(node_id)
        p = np.asarray(pos, dtype=float)
        acc = p * w if acc is None else acc + p * w
    return tuple(float(c) for c in acc)


# ---------------------------------------------------------------------------
# Frustum projection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrustumShape:
    owner: str
    apex: tuple[float, float, float]
    corner_rays: tuple[tuple[float, float, float], ...]  # 4 unit vectors
    color: tuple[int, int, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "owner": self.owner,
            "apex": list(self.apex),
            "cornerRays": [list(r) for r in self.corner_rays],
            "color": list(self.color),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FrustumShape":
        return cls(
            owner=d["owner"],
            apex=tuple(d["apex"]),
            corner_rays=tuple(tuple(r) for r in d["cornerRays"]),
            color=tuple(d["color"]),
        )


def frustum_from_pose(owner: str, pose: HeadPose, color: tuple[int, int, int]) -> FrustumShape:
    """Corner rays of the view pyramid for a head pose, in world space."""
    rot = quaternion_rotation_matrix(*pose.orientation)
    tx = math.tan(pose.fov_horizontal / 2.0)
    ty = math.tan(pose.fov_vertical / 2.0)
    corners = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        v = np.array([sx * tx, sy * ty, -1.0])
        v = rot @ (v / np.linalg.norm(v))
        corners.append((float(v[0]), float(v[1]), float(v[2])))
    return FrustumShape(owner=owner, apex=pose.position, corner_rays=tuple(corners), color=color)


@dataclass(frozen=True)
class MapTransform:
    """Uniform scale + offset from graph-plane coordinates to minimap pixels."""

    scale: float
    offset: tuple[float, float]

    def __post_init__(self):
        if self.scale == 0.0:
            raise ValueError("map transform must be invertible (scale != 0)")

    def apply(self, p: tuple[float, float]) -> tuple[float, float]:
        return (p[0] * self.scale + self.offset[0], p[1] * self.scale + self.offset[1])

    def invert(self, p: tuple[float, float]) -> tuple[float, float]:
        return ((p[0] - self.offset[0]) / self.scale, (p[1] - self.offset[1]) / self.scale)

    @classmethod
    def identity(cls) -> "MapTransform":
        return cls(scale=1.0, offset=(0.0, 0.0))


def _ray_plane_point(apex: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Intersect a ray with the z=0 plane; clip at FAR_CLIP when parallel or
    pointing away."""
    dz = direction[2]
    if abs(dz) > 1e-12:
        t = -apex[2] / dz
        if t > 0.0:
            return apex + t * direction
    return apex + FAR_CLIP * direction


def project_frustum_to_minimap(
    frustum: FrustumShape, map_transform: MapTransform
) -> tuple[list[tuple[float, float]], tuple[tuple[float, float], tuple[float, float]]]:
    """Project a frustum onto the graph plane and map it into minimap space.

    Returns (polygon, head_ray_segment): the quadrilateral of corner-ray
    intersections with z=0, and the segment from the apex's ground point to
    the central-ray intersection.
    """
    if len(frustum.corner_rays) != 4:
        raise DegenerateFrustumError("need exactly 4 corner rays")
    rays = [np.array(r, dtype=float) for r in frustum.corner_rays]
    for r in rays:
        if abs(float(np.linalg.norm(r)) - 1.0) > 1e-6:
            raise DegenerateFrustumError("corner rays must be unit length")
    for i in range(4):
        for j in range(i + 1, 4):
            if float(np.dot(rays[i], rays[j])) > 1.0 - 1e-12:
                raise DegenerateFrustumError("zero apex angle between corner rays")

    apex = np.array(frustum.apex, dtype=float)
    polygon = [
        map_transform.apply((p[0], p[1]))
        for p in (_ray_plane_point(apex, r) for r in rays)
    ]
    central = np.sum(rays, axis=0)
    central_norm = float(np.linalg.norm(central))
    if central_norm < 1e-12:
        raise DegenerateFrustumError("corner rays cancel out; no central head ray")
    central /= central_norm
    hit = _ray_plane_point(apex, central)
    segment = (
        map_transform.apply((apex[0], apex[1])),
        map_transform.apply((hit[0], hit[1])),
    )
    return polygon, segment


# ---------------------------------------------------------------------------
# Selection highlights
# ---------------------------------------------------------------------------


def selection_highlight(
    state: GraphState,
    sessions: Iterable[UserSession],
    for_user: str,
) -> list[tuple[str, tuple[int, int, int]]]:
    """Highlight entries (node id, owner color) for one viewer's feed.

    The viewer's own selection is excluded, as are selections pointing at
    nodes that no longer exist in this state version.
    """
    out = []
    for session in sorted(sessions, key=lambda s: s.id):
        if session.id == for_user or not session.selected_node:
            continue
        if session.selected_node in state.nodes:
            out.append((session.selected_node, session.color))
    return out
