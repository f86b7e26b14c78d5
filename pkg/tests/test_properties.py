"""Hypothesis property tests for the geometry and document invariants."""

from hypothesis import given, settings, strategies as st

from visrooms.awareness import natural_neighbor_weights_2d, relocate_cursor
from visrooms.model import CursorHint, Document, Platform

finite_coord = st.floats(
    min_value=-1000.0, max_value=1000.0, allow_nan=False, allow_infinity=False
)
point2 = st.tuples(finite_coord, finite_coord)


@st.composite
def site_clouds(draw):
    n = draw(st.integers(min_value=1, max_value=10))
    pts = draw(
        st.lists(point2, min_size=n, max_size=n, unique_by=lambda p: (p[0], p[1]))
    )
    return {f"n{i}": p for i, p in enumerate(pts)}


@given(sites=site_clouds(), query=point2)
@settings(max_examples=150, deadline=None)
def test_weights_always_partition_unity_and_nonnegative(sites, query):
    entries = natural_neighbor_weights_2d(query, sites)
    assert entries, "at least one entry for nonempty sites"
    total = 0.0
    for node_id, w in entries:
        assert node_id in sites
        assert w >= 0.0
        total += w
    assert abs(total - 1.0) <= 1e-9


@given(sites=site_clouds())
@settings(max_examples=60, deadline=None)
def test_query_at_any_site_is_exact(sites):
    for node_id, p in sites.items():
        assert natural_neighbor_weights_2d(p, sites) == [(node_id, 1.0)]
        break  # one site per cloud is plenty


@given(sites=site_clouds(), query=point2)
@settings(max_examples=100, deadline=None)
def test_relocation_to_same_sites_stays_in_bounding_box(sites, query):
    entries = natural_neighbor_weights_2d(query, sites)
    hint = CursorHint(entries=tuple(entries), source_platform=Platform.FLAT2D, timestamp_ms=0)
    x, y = relocate_cursor(hint, sites)
    xs = [p[0] for p in sites.values()]
    ys = [p[1] for p in sites.values()]
    # a convex combination of site positions can never leave their box
    assert min(xs) - 1e-9 <= x <= max(xs) + 1e-9
    assert min(ys) - 1e-9 <= y <= max(ys) + 1e-9


@given(text=st.text(max_size=400))
@settings(max_examples=150, deadline=None)
def test_word_count_invariant(text):
    doc = Document(id="d", title="t", body=text)
    assert doc.word_count == len(text.split())
