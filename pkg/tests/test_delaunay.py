import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_force_delaunay, strictly_inside
from graphlcd.delaunay import TopoGraph, delaunay, edges_of, incircle
from graphlcd.errors import DegenerateTriangulationError, InsufficientPointsError


def geometric_edges(g):
    return {frozenset(map(tuple, g.vertices[list(e)].tolist())) for e in g.edges}


def general_position(points, eps=1e-6):
    """No four points cocircular and no three collinear (within ``eps``)."""
    n = len(points)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = points[i], points[j], points[k]
                if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) < eps:
                    return False
                for m in range(k + 1, n):
                    if abs(incircle(*orient_ccw(a, b, c), points[m])) < eps:
                        return False
    return True


def orient_ccw(a, b, c):
    if (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]) < 0:
        return a, c, b
    return a, b, c


def test_single_triangle():
    g = delaunay([[0, 0], [4, 0], [1, 3]])
    assert len(g.triangles) == 1 and len(g.edges) == 3


def test_unit_square_diagonal():
    g = delaunay([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert len(g.triangles) == 2 and len(g.edges) == 5
    assert frozenset({(1.0, 0.0), (0.0, 1.0)}) in geometric_edges(g)
    shuffled = delaunay([[0, 1], [1, 1], [0, 0], [1, 0]])
    assert geometric_edges(shuffled) == geometric_edges(g)


@pytest.mark.parametrize("seed", range(5))
def test_random_points_match_brute_force(seed):
    pts = np.random.default_rng(seed).uniform(0, 100, (30, 2))
    g = delaunay(pts)
    for tri in g.triangles:
        assert len(strictly_inside(g.vertices, tri)) == 0
    assert {tuple(sorted(t)) for t in g.triangles} == brute_force_delaunay(g.vertices)


def test_grid_is_fully_triangulated():
    pts = np.array([(x, y) for x in range(5) for y in range(4)], dtype=float)
    g = delaunay(pts)
    assert len(g.triangles) == 2 * 4 * 3
    for tri in g.triangles:
        assert len(strictly_inside(g.vertices, tri)) == 0


def test_triangles_counter_clockwise(rng):
    g = delaunay(rng.uniform(0, 1, (25, 2)))
    v = g.vertices
    for a, b, c in g.triangles:
        assert (v[b, 0] - v[a, 0]) * (v[c, 1] - v[a, 1]) - (v[b, 1] - v[a, 1]) * (v[c, 0] - v[a, 0]) > 0


def test_duplicates_dropped_with_labels():
    g = delaunay([[0, 0], [2, 0], [0, 0], [0, 2]], labels=["a", "b", "c", "d"])
    assert g.labels == ["a", "b", "d"]
    assert len(g.vertices) == 3


def test_degenerate_inputs():
    with pytest.raises(DegenerateTriangulationError):
        delaunay([[0, 0], [1, 1], [2, 2], [3, 3]])
    with pytest.raises(InsufficientPointsError):
        delaunay([[0, 0], [1, 1], [0, 0]])
    with pytest.raises(ValueError):
        delaunay([[0, 0], [1, 1], [0, 1]], labels=[1])


def test_edges_are_union_of_triangle_edges(rng):
    g = delaunay(rng.uniform(0, 50, (20, 2)))
    assert g.edges == edges_of(g.triangles)
    assert all(i < j for i, j in g.edges)


def test_dump_text():
    g = delaunay([[0, 0], [4, 0], [1, 3]], labels=[7, 8, 9])
    text = g.dump_text()
    assert text.startswith("v 7 0.0 0.0\n")
    assert text.count("\ne ") == 3


def test_explicit_edges_kept():
    g = TopoGraph(np.zeros((3, 2)), [0, 1, 2], [], {(0, 1)})
    assert g.labeled_edges() == {(0, 1)}


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 16))
def test_shuffle_invariance(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, (n, 2))
    if not general_position(pts):
        return
    g = delaunay(pts)
    h = delaunay(pts[rng.permutation(n)])
    assert geometric_edges(g) == geometric_edges(h)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 25),
       scale=st.floats(0.1, 10), angle=st.floats(-3.1, 3.1))
def test_similarity_invariance(seed, n, scale, angle):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 100, (n, 2))
    if not general_position(pts, 1e-4):
        return
    R = scale * np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    moved = pts @ R.T + [13.0, -7.0]
    assert delaunay(pts).labeled_edges() == delaunay(moved).labeled_edges()
