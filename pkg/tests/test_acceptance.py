"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with:  pytest tests/test_acceptance.py -v -s
"""

import functools
import math
import time

import numpy as np
import pytest

from conftest import make_node, make_state
from oracles import analytic_frustum_polygon, raster_laplace_weights
from test_graph import run_fuzz

from visrooms.awareness import (
    MapTransform,
    frustum_from_pose,
    natural_neighbor_weights_2d,
    project_frustum_to_minimap,
    relocate_cursor,
)
from visrooms.corpora import load_corpus
from visrooms.layout import (
    LayoutParams,
    count_overlaps,
    layout3d,
    project_to_2d,
    resolve_overlaps_2d,
    semicircle_doc_layout,
)
from visrooms.metrics import analyze_log
from visrooms.model import CursorHint, HeadPose, Platform, word_count
from visrooms.persistence import oplog_path
from visrooms.rooms import RoomConfig, load_log
from visrooms.sim import ScenarioScript, run_scenario


def criterion(name):
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\n[acceptance] {name}: FAIL")
                raise
            print(f"\n[acceptance] {name}: PASS")

        return wrapper

    return deco


# ---------------------------------------------------------------------------


@criterion("convergence suite (8 clients, 500 ops, 0-250ms latency, 20 seeds)")
def test_convergence_suite():
    script = ScenarioScript.from_dict(
        {
            "clients": [
                {
                    "name": f"user{i}",
                    "platform": "spatial3d" if i % 2 else "flat2d",
                    "behavior": {"random": {"count": 63 if i < 4 else 62}},  # 500 total
                }
                for i in range(8)
            ],
            "network": {"latencyMs": {"min": 0, "max": 250}, "dropAwarenessProb": 0.1},
            "corpus": "rivergate-6",
        }
    )
    assert sum(63 if i < 4 else 62 for i in range(8)) == 500
    t0 = time.perf_counter()
    for seed in range(20):
        result = run_scenario(script, seed=seed)  # raises NonConvergenceError on divergence
        assert result.report.converged
        assert result.report.time_to_quiescence_ms <= 2000
    elapsed = time.perf_counter() - t0
    print(f"  20 runs in {elapsed:.1f}s", end="")
    assert elapsed < 30.0


@criterion("graph-core fuzz (10,000 ops x 50 seeds, all invariants)")
def test_graph_fuzz_50_seeds():
    # run_fuzz checks every type invariant after every applied operation and
    # that rejections leave the state object untouched
    for seed in range(50):
        run_fuzz(seed, 10_000)


@criterion("natural-neighbor weights vs 2000x2000 raster Voronoi oracle")
def test_natural_neighbor_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    span = 100.0
    checked = 0
    while checked < 100:
        n = int(rng.integers(6, 13))
        pts = rng.uniform(-span / 2, span / 2, size=(n, 2))
        if min(
            np.linalg.norm(pts[i] - pts[j]) for i in range(n) for j in range(i + 1, n)
        ) < 0.05 * span:
            continue
        lam = rng.dirichlet(np.ones(n) * 4.0)
        if lam.min() < 0.02:
            continue
        query = tuple(lam @ pts)
        sites = {f"n{i}": (float(pts[i, 0]), float(pts[i, 1])) for i in range(n)}

        entries = natural_neighbor_weights_2d(query, sites)
        weights = dict(entries)

        # partition of unity and nonnegativity
        assert abs(sum(weights.values()) - 1.0) <= 1e-9
        assert all(w >= 0.0 for w in weights.values())

        # exactness at a site
        some_site = sorted(sites)[0]
        assert natural_neighbor_weights_2d(sites[some_site], sites) == [(some_site, 1.0)]

        # linear reproduction
        hint = CursorHint(entries=tuple(entries), source_platform=Platform.FLAT2D, timestamp_ms=0)
        rebuilt = relocate_cursor(hint, sites)
        if math.dist(rebuilt, query) > 1e-6:
            continue  # on-hull fallback; not an interior configuration
        assert math.dist(rebuilt, query) <= 1e-6

        # raster Voronoi oracle at the stated resolution
        oracle = raster_laplace_weights(query, sites, resolution=2000)
        for nid in set(weights) | set(oracle):
            assert weights.get(nid, 0.0) == pytest.approx(oracle.get(nid, 0.0), abs=1e-2), (
                nid,
                weights.get(nid),
                oracle.get(nid),
            )
        checked += 1
    elapsed = time.perf_counter() - t0
    print(f"  100 configurations in {elapsed:.1f}s", end="")
    assert elapsed < 120.0


@criterion("layout properties (exact projection, pinning, zero overlaps, determinism)")
def test_layout_properties():
    params = LayoutParams()

    # projection is exact coordinate dropping (bitwise)
    rng = np.random.default_rng(1)
    cloud = {f"n{i}": tuple(rng.uniform(-500, 500, 3)) for i in range(300)}
    flat = project_to_2d(cloud)
    for nid, (x, y, _) in cloud.items():
        assert flat[nid][0] is x and flat[nid][1] is y

    # overlap resolution: pinning bitwise, zero overlaps in >= 95% of 100 seeds
    zero_runs = 0
    for seed in range(100):
        srng = np.random.default_rng(seed)
        pts = srng.uniform(-200, 200, size=(100, 2))
        state = make_state(
            nodes=[make_node(f"n{i}", pos=(pts[i, 0], pts[i, 1], 0.0)) for i in range(100)]
        )
        positions = {f"n{i}": (float(pts[i, 0]), float(pts[i, 1])) for i in range(100)}
        out, pinned = resolve_overlaps_2d(state, positions, LayoutParams(seed=seed))
        for nid in pinned:
            assert out[nid] == positions[nid]
        assert count_overlaps(out, params.node_radius) <= count_overlaps(positions, params.node_radius)
        if count_overlaps(out, params.node_radius) == 0:
            zero_runs += 1
    print(f"  zero-overlap runs: {zero_runs}/100", end="")
    assert zero_runs >= 95

    # determinism, bitwise, for both stages
    state = make_state(nodes=[make_node(f"n{i}") for i in range(30)])
    assert layout3d(state, params) == layout3d(state, params)
    positions = {f"n{i}": (float(i % 6), float(i // 6)) for i in range(30)}
    r1 = resolve_overlaps_2d(state, positions, params)
    r2 = resolve_overlaps_2d(state, positions, params)
    assert r1 == r2


@criterion("frustum projection vs analytic ray-plane oracle (1,000 poses)")
def test_frustum_projection_oracle():
    rng = np.random.default_rng(77)
    for _ in range(1000):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(0.0, math.pi)
        pose = HeadPose(
            position=(rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0.5, 40)),
            orientation=(math.cos(angle / 2), *(math.sin(angle / 2) * axis)),
            fov_vertical=rng.uniform(0.2, 1.8),
            fov_horizontal=rng.uniform(0.2, 2.0),
        )
        frustum = frustum_from_pose("u", pose, (0, 0, 0))
        polygon, _ = project_frustum_to_minimap(frustum, MapTransform.identity())
        expected = analytic_frustum_polygon(frustum.apex, list(frustum.corner_rays))
        for got, want in zip(polygon, expected):
            assert abs(got[0] - want[0]) <= 1e-9 and abs(got[1] - want[1]) <= 1e-9


@criterion("log round-trip (20 seeds): replay reproduces hash; analyze == live")
def test_log_round_trip(tmp_path):
    for seed in range(20):
        script = ScenarioScript.from_dict(
            {
                "clients": [
                    {"name": f"u{i}", "platform": "spatial3d" if i % 2 else "flat2d",
                     "behavior": {"random": {"count": 25}}}
                    for i in range(4)
                ],
                "network": {"latencyMs": {"min": 0, "max": 100}},
                "corpus": "saltmarsh-6",
            }
        )
        log_dir = tmp_path / f"run{seed}"
        result = run_scenario(script, seed=seed, log_dir=log_dir)
        result.engine.close()
        path = oplog_path(log_dir, "saltmarsh-6")

        restored, corrupt = load_log(path)
        assert corrupt is None
        assert restored.state_hash() == result.state_hash

        disk = analyze_log(path)
        assert {u: m.to_dict() for u, m in disk.per_user.items()} == {
            u: m.to_dict() for u, m in result.report.per_user.items()
        }


@criterion("fixture shape: 6-doc corpora at 813/779/805 words; 15-doc at 2583/2518")
def test_fixture_shape():
    expected = {
        "rivergate-6": (6, 813),
        "saltmarsh-6": (6, 779),
        "foxhollow-6": (6, 805),
        "rivergate-15": (15, 2583),
        "saltmarsh-15": (15, 2518),
    }
    for name, (n_docs, total) in expected.items():
        config = load_corpus(name)
        docs = config["documents"]
        assert len(docs) == n_docs, name
        assert sum(word_count(d["body"]) for d in docs) == total, name
        room = RoomConfig.from_dict(config)
        poses = semicircle_doc_layout([d.id for d in room.documents], room.semicircle_radius)
        assert len(poses) == n_docs
        gaps = [math.dist(a.center, b.center) for a, b in zip(poses, poses[1:])]
        for gap in gaps:
            assert abs(gap - gaps[0]) <= 1e-9
        anchors = [n for n in room.documents]
        assert len(anchors) == n_docs
