"""Shared layout pipeline: 3D force-directed placement, exact 2D projection,
overlap resolution in the plane, and the semicircular document arrangement.

The force model follows the d3-force family: a spring force pulling linked
nodes toward ``link_distance`` (strength 1/min(deg), endpoint bias by degree),
an inverse-square many-body charge with near-field softening, and a weak
positional attraction toward the origin. Cooling is multiplicative
(``alpha *= 1 - cooling_decay``) and velocities are damped by a constant
factor each tick. All of it is a pure function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .graph import GraphState

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
VELOCITY_DAMPING = 0.6
CHARGE_MIN_DIST2 = 1.0  # near-field softening floor, squared units
STOP_DISPLACEMENT = 1e-3


@dataclass(frozen=True)
class LayoutParams:
    link_distance: float = 30.0
    charge_strength: float = -30.0
    center_attraction: float = 0.1
    node_radius: float = 10.0
    max_iterations: int = 300
    cooling_decay: float = 0.0228
    seed: int = 0

    def __post_init__(self):
        if self.node_radius <= 0:
            raise ValueError("node_radius must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (0.0 < self.cooling_decay < 1.0):
            raise ValueError("cooling_decay must be in (0, 1)")

    def to_dict(self) -> dict[str, Any]:
        return {
            "linkDistance": self.link_distance,
            "chargeStrength": self.charge_strength,
            "centerAttraction": self.center_attraction,
            "nodeRadius": self.node_radius,
            "maxIterations": self.max_iterations,
            "coolingDecay": self.cooling_decay,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LayoutParams":
        return cls(
            link_distance=float(d.get("linkDistance", 30.0)),
            charge_strength=float(d.get("chargeStrength", -30.0)),
            center_attraction=float(d.get("centerAttraction", 0.1)),
            node_radius=float(d.get("nodeRadius", 10.0)),
            max_iterations=int(d.get("maxIterations", 300)),
            cooling_decay=float(d.get("coolingDecay", 0.0228)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class LayoutResult:
    positions3: dict[str, tuple[float, float, float]]
    positions2: dict[str, tuple[float, float]]
    pinned: frozenset[str]

    def to_dict(self) -> dict[str, Any]:
        return {
            "positions3": {n: list(p) for n, p in sorted(self.positions3.items())},
            "positions2": {n: list(p) for n, p in sorted(self.positions2.items())},
            "pinned": sorted(self.pinned),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LayoutResult":
        return cls(
            positions3={n: tuple(p) for n, p in d["positions3"].items()},
            positions2={n: tuple(p) for n, p in d["positions2"].items()},
            pinned=frozenset(d["pinned"]),
        )


@dataclass(frozen=True)
class PanelPose:
    document_id: str
    center: tuple[float, float, float]
    facing_normal: tuple[float, float, float]
    anchor_offset: tuple[float, float, float]

    def anchor_position(self) -> tuple[float, float, float]:
        return tuple(c + o for c, o in zip(self.center, self.anchor_offset))

    def to_dict(self) -> dict[str, Any]:
        return {
            "documentId": self.document_id,
            "center": list(self.center),
            "facingNormal": list(self.facing_normal),
            "anchorOffset": list(self.anchor_offset),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PanelPose":
        return cls(
            document_id=d["documentId"],
            center=tuple(d["center"]),
            facing_normal=tuple(d["facingNormal"]),
            anchor_offset=tuple(d["anchorOffset"]),
        )


# ---------------------------------------------------------------------------
# Initial placement
# ---------------------------------------------------------------------------


def spiral_positions(node_ids: Sequence[str], params: LayoutParams) -> dict[str, np.ndarray]:
    """Deterministic golden-angle spiral placement in 3D.

    Node 0 (in sorted-id order) sits exactly at the origin; later nodes climb
    a cube-root radial ramp along a Fibonacci-sphere direction sequence. The
    seed only rotates the azimuthal phase.
    """
    n = len(node_ids)
    phase = 2.0 * math.pi * math.modf(params.seed * 0.6180339887498949)[0]
    out: dict[str, np.ndarray] = {}
    for rank, nid in enumerate(sorted(node_ids)):
        r = 2.0 * params.node_radius * rank ** (1.0 / 3.0)
        u = (rank + 0.5) / max(n, 1)
        z = 1.0 - 2.0 * u
        ring = math.sqrt(max(0.0, 1.0 - z * z))
        theta = rank * GOLDEN_ANGLE + phase
        out[nid] = np.array(
            [r * ring * math.cos(theta), r * ring * math.sin(theta), r * z]
        )
    return out


# ---------------------------------------------------------------------------
# Force simulation
# ---------------------------------------------------------------------------


def _simulate(
    positions: np.ndarray,
    link_pairs: np.ndarray,
    params: LayoutParams,
    fixed_mask: np.ndarray,
    controller=None,
) -> np.ndarray:
    """Run the cooled force simulation in-place and return final positions.

    positions: (n, dim) float64; link_pairs: (m, 2) int indices.
    fixed_mask: (n,) bool; fixed nodes exert forces but never move.
    controller: optional callable(positions, alpha, displacement) returning
    (stop, next_alpha); it owns the stopping policy and may reheat alpha
    (the d3 ``alpha(x).restart()`` idiom) while the tick budget lasts.
    Without a controller the loop stops when the largest per-tick
    displacement falls below ``STOP_DISPLACEMENT``.
    """
    n, dim = positions.shape
    vel = np.zeros_like(positions)
    alpha = 1.0

    if len(link_pairs):
        src = link_pairs[:, 0]
        tgt = link_pairs[:, 1]
        degree = np.bincount(link_pairs.ravel(), minlength=n).astype(float)
        strength = 1.0 / np.minimum(degree[src], degree[tgt])
        bias = degree[src] / (degree[src] + degree[tgt])
    else:
        src = tgt = np.zeros(0, dtype=int)
        strength = bias = np.zeros(0)

    # Preallocated pairwise buffers; the loop runs hot for every relayout.
    anticipated = np.empty_like(positions)
    diff = np.empty((n, n, dim)) if n > 1 else None
    d2 = np.empty((n, n)) if n > 1 else None

    free = ~fixed_mask
    for _ in range(params.max_iterations):
        alpha *= 1.0 - params.cooling_decay

        np.add(positions, vel, out=anticipated)

        # Spring force along links.
        if len(src):
            delta = anticipated[tgt] - anticipated[src]
            dist = np.sqrt(np.einsum("ij,ij->i", delta, delta))
            dist = np.maximum(dist, 1e-9)
            f = (dist - params.link_distance) / dist * alpha * strength
            pull = delta * f[:, None]
            for k in range(dim):
                vel[:, k] -= np.bincount(tgt, weights=pull[:, k] * bias, minlength=n)
                vel[:, k] += np.bincount(src, weights=pull[:, k] * (1.0 - bias), minlength=n)

        # Many-body charge, exact pairwise with near-field softening.
        if n > 1:
            np.subtract(anticipated[None, :, :], anticipated[:, None, :], out=diff)
            np.einsum("ijk,ijk->ij", diff, diff, out=d2)
            near = d2 < CHARGE_MIN_DIST2
            if near.sum() > n:  # anything off-diagonal
                np.copyto(d2, np.sqrt(np.maximum(d2, 1e-18) * CHARGE_MIN_DIST2), where=near)
            np.fill_diagonal(d2, np.inf)
            np.divide(params.charge_strength * alpha, d2, out=d2)
            # diff[i, j] points from i toward j; negative charge repels.
            vel += np.einsum("ijk,ij->ik", diff, d2)

        # Weak attraction toward the origin.
        vel -= positions * (params.center_attraction * alpha)

        vel *= VELOCITY_DAMPING
        vel[fixed_mask] = 0.0
        positions[free] += vel[free]

        displacement = math.sqrt(float(np.max(np.einsum("ij,ij->i", vel, vel), initial=0.0)))
        if controller is not None:
            stop, alpha = controller(positions, alpha, displacement)
            if stop:
                break
        elif displacement < STOP_DISPLACEMENT:
            break
    return positions


def _link_index_pairs(graph: GraphState, index: Mapping[str, int]) -> np.ndarray:
    pairs = [
        (index[a], index[b])
        for a, b in (l.endpoints for l in graph.links.values())
        if a in index and b in index
    ]
    return np.array(sorted(pairs), dtype=int) if pairs else np.zeros((0, 2), dtype=int)


def layout3d(
    graph: GraphState,
    params: LayoutParams,
    initial: Optional[Mapping[str, tuple[float, float, float]]] = None,
    fixed: Iterable[str] = (),
) -> dict[str, tuple[float, float, float]]:
    """Compute 3D positions for every node in the graph.

    Without ``initial``, nodes start on the golden-angle spiral. An
    incremental relayout passes the previous positions as initial conditions
    (velocities always restart at zero). ``fixed`` nodes are held in place
    but still repel and attract others.
    """
    if not graph.nodes:
        return {}
    ids = sorted(graph.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    spiral = spiral_positions(ids, params)
    pos = np.stack(
        [
            np.asarray(initial[nid], dtype=float)
            if initial is not None and nid in initial
            else spiral[nid]
            for nid in ids
        ]
    )
    fixed_mask = np.zeros(len(ids), dtype=bool)
    for nid in fixed:
        if nid in index:
            fixed_mask[index[nid]] = True
    pos = _simulate(pos, _link_index_pairs(graph, index), params, fixed_mask)
    if not np.all(np.isfinite(pos)):
        raise ArithmeticError("layout diverged to non-finite positions")
    return {nid: (float(p[0]), float(p[1]), float(p[2])) for nid, p in zip(ids, pos)}


def project_to_2d(
    positions3: Mapping[str, tuple[float, float, float]],
) -> dict[str, tuple[float, float]]:
    """Drop the z coordinate; nothing else."""
    return {nid: (p[0], p[1]) for nid, p in positions3.items()}


def _overlap_pairs(pos: np.ndarray, radius: float) -> np.ndarray:
    """Boolean (n, n) matrix of overlapping pairs (strict upper triangle)."""
    diff = pos[None, :, :] - pos[:, None, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    overlap = d2 < (2.0 * radius) ** 2
    return np.triu(overlap, k=1)


def count_overlaps(
    positions2: Mapping[str, tuple[float, float]], node_radius: float
) -> int:
    if len(positions2) < 2:
        return 0
    pos = np.array([positions2[nid] for nid in sorted(positions2)], dtype=float)
    return int(np.count_nonzero(_overlap_pairs(pos, node_radius)))


def resolve_overlaps_2d(
    graph: GraphState,
    positions2: Mapping[str, tuple[float, float]],
    params: LayoutParams,
) -> tuple[dict[str, tuple[float, float]], frozenset[str]]:
    """Re-run the force simulation in the plane for overlapping nodes only.

    Nodes that overlap nobody are pinned: their output is bitwise-identical
    to the input. The others are re-laid-out with the same parameters, with
    pinned nodes held fixed. The returned configuration never has more
    overlapping pairs than the input (the best intermediate state wins if
    the simulation cannot fully separate).
    """
    ids = sorted(positions2)
    if set(ids) != set(graph.nodes):
        raise ValueError("positions2 must cover exactly the graph's nodes")
    if not ids:
        return {}, frozenset()
    index = {nid: i for i, nid in enumerate(ids)}
    pos = np.array([positions2[nid] for nid in ids], dtype=float)

    overlap = _overlap_pairs(pos, params.node_radius)
    involved = overlap.any(axis=0) | overlap.any(axis=1)
    pinned = frozenset(nid for i, nid in enumerate(ids) if not involved[i])
    if not involved.any():
        return {nid: positions2[nid] for nid in ids}, pinned

    fixed_mask = ~involved
    original = pos.copy()

    # Exactly coincident free nodes have no repulsion direction; nudge all
    # but the first of each coincident group apart deterministically.
    rng = np.random.default_rng(params.seed)
    order = np.lexsort(original.T)
    for a, b in zip(order[:-1], order[1:]):
        if involved[b] and np.array_equal(original[a], original[b]):
            pos[b] += rng.normal(scale=1e-3 * params.node_radius, size=2)

    # The input configuration is the fallback, so the output can never have
    # more overlapping pairs than the input.
    best_pos = original
    best_count = int(np.count_nonzero(_overlap_pairs(original, params.node_radius)))
    stalled = 0

    def controller(current: np.ndarray, alpha: float, displacement: float):
        nonlocal best_pos, best_count, stalled
        count = int(np.count_nonzero(_overlap_pairs(current, params.node_radius)))
        if count < best_count:
            best_count = count
            best_pos = current.copy()
            stalled = 0
        else:
            if count == best_count:
                best_pos = current.copy()  # same count, more relaxed
            stalled += 1
        if count == 0:
            return True, alpha
        # Cooling can freeze nodes a hair inside the overlap threshold;
        # reheat on stall and keep pushing while the tick budget lasts.
        if stalled >= 15 and alpha < 0.7:
            stalled = 0
            return False, 0.7
        return False, alpha

    _simulate(pos, _link_index_pairs(graph, index), params, fixed_mask, controller)

    out: dict[str, tuple[float, float]] = {}
    for i, nid in enumerate(ids):
        if fixed_mask[i]:
            out[nid] = positions2[nid]  # bitwise-preserved
        else:
            out[nid] = (float(best_pos[i, 0]), float(best_pos[i, 1]))
    return out, pinned


def compute_layout(
    graph: GraphState,
    params: LayoutParams,
    initial: Optional[Mapping[str, tuple[float, float, float]]] = None,
    fixed: Iterable[str] = (),
) -> LayoutResult:
    """Full pipeline: 3D layout, projection, and 2D overlap resolution."""
    positions3 = layout3d(graph, params, initial=initial, fixed=fixed)
    flat = project_to_2d(positions3)
    positions2, pinned = resolve_overlaps_2d(graph, flat, params) if flat else ({}, frozenset())
    return LayoutResult(positions3=positions3, positions2=positions2, pinned=pinned)


# ---------------------------------------------------------------------------
# Document panels
# ---------------------------------------------------------------------------


def semicircle_doc_layout(
    document_ids: Sequence[str],
    radius: float,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> list[PanelPose]:
    """Place document panels on a horizontal semicircle at the center height.

    Panel i of n sits at angle pi*(i+0.5)/n, so the arc carries half-step
    margins at both ends and reversing the document order mirrors the poses
    about the forward (+z) axis. Anchor nodes float 0.3*radius in front of
    each panel, toward the room center.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not document_ids:
        raise ValueError("document_ids must be nonempty")
    n = len(document_ids)
    cx, cy, cz = center
    poses = []
    for i, doc_id in enumerate(document_ids):
        theta = math.pi * (i + 0.5) / n
        panel = (cx + radius * math.cos(theta), cy, cz + radius * math.sin(theta))
        normal = (
            (cx - panel[0]) / radius,
            0.0,
            (cz - panel[2]) / radius,
        )
        offset = tuple(0.3 * radius * c for c in normal)
        poses.append(
            PanelPose(
                document_id=doc_id,
                center=panel,
                facing_normal=normal,
                anchor_offset=offset,  # type: ignore[arg-type]
            )
        )
    return poses
