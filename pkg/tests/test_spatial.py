import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from energyrank.spatial import RTree


def linear_scan(points, rect):
    x0, y0, x1, y1 = rect
    return sorted(k for k, (x, y) in points.items() if x0 <= x <= x1 and y0 <= y <= y1)


def random_rect(rng, lo=0.0, hi=1.0):
    xs = np.sort(rng.uniform(lo, hi, 2))
    ys = np.sort(rng.uniform(lo, hi, 2))
    return (xs[0], ys[0], xs[1], ys[1])


def build(points, order=None, **kw):
    t = RTree(**kw)
    for k in order if order is not None else points:
        t.insert_point(k, *points[k])
    return t


def test_thousand_points_hundred_queries_match_scan():
    rng = np.random.default_rng(0)
    pts = {i: tuple(rng.uniform(0, 1, 2)) for i in range(1000)}
    t = build(pts)
    t.check()
    assert len(t) == 1000 and t.depth() >= 3
    for _ in range(100):
        r = random_rect(rng)
        assert t.search(r) == linear_scan(pts, r)


def test_universal_and_empty_queries():
    rng = np.random.default_rng(1)
    pts = {i: tuple(rng.uniform(0, 1, 2)) for i in range(200)}
    t = build(pts)
    assert t.search((-1, -1, 2, 2)) == list(range(200))
    assert t.search((5, 5, 6, 6)) == []
    assert RTree().search((0, 0, 1, 1)) == []
    assert RTree().bounds() is None


def test_boundary_points_are_included():
    t = build({"a": (0.0, 0.0), "b": (1.0, 1.0), "c": (1.0000001, 0.5)})
    assert t.search((0.0, 0.0, 1.0, 1.0)) == ["a", "b"]


def test_duplicate_locations():
    pts = {i: (0.5, 0.5) for i in range(50)}
    t = build(pts, max_entries=4)
    t.check()
    assert t.search((0.5, 0.5, 0.5, 0.5)) == list(range(50))


def test_rectangle_entries():
    t = RTree(max_entries=4)
    rects = {i: (i, 0, i + 1.5, 1) for i in range(20)}
    for k, r in rects.items():
        t.insert(k, r)
    t.check()
    assert t.search((4.8, 0.5, 5.2, 0.5)) == [4, 5]


def test_bad_capacity():
    with pytest.raises(ValueError):
        RTree(max_entries=2)
    with pytest.raises(ValueError):
        RTree(max_entries=8, min_entries=5)


coords = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(coords, coords), min_size=0, max_size=120),
    st.lists(st.tuples(coords, coords, coords, coords), min_size=1, max_size=10),
    st.integers(4, 12),
    st.randoms(use_true_random=False),
)
def test_queries_equal_scan_and_ignore_insertion_order(raw, rects, cap, rnd):
    pts = dict(enumerate(raw))
    order = list(pts)
    rnd.shuffle(order)
    t1 = build(pts, max_entries=cap)
    t2 = build(pts, order, max_entries=cap)
    t1.check()
    t2.check()
    for a, b, c, d in rects:
        r = (min(a, c), min(b, d), max(a, c), max(b, d))
        expect = linear_scan(pts, r)
        assert t1.search(r) == expect == t2.search(r)
