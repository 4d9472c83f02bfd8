import itertools

import numpy as np
import pytest

from graphlcd.features import FrameFeatures


def random_frame(rng, n=60, dim=16, frame_id=0, size=(640.0, 480.0)):
    kp = np.c_[rng.uniform(0, size[0], n), rng.uniform(0, size[1], n)]
    scores = np.sort(rng.uniform(0, 1, n))[::-1]
    return FrameFeatures(frame_id, kp, scores, rng.standard_normal((n, dim)))


def circumcircle(a, b, c):
    A = np.array([[b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]], dtype=float)
    rhs = 0.5 * np.array([b @ b - a @ a, c @ c - a @ a], dtype=float)
    center = np.linalg.solve(A, rhs)
    return center, float(((a - center) ** 2).sum())


def strictly_inside(points, tri, eps=1e-9):
    """Indices of points strictly inside the circumcircle of ``tri``."""
    a, b, c = (points[i] for i in tri)
    center, r2 = circumcircle(a, b, c)
    d2 = ((points - center) ** 2).sum(1)
    mask = d2 < r2 * (1 - eps)
    mask[list(tri)] = False
    return np.flatnonzero(mask)


def brute_force_delaunay(points, eps=1e-9):
    """All triangles with an empty circumcircle, O(n^4)."""
    points = np.asarray(points, dtype=float)
    out = set()
    for tri in itertools.combinations(range(len(points)), 3):
        a, b, c = (points[i] for i in tri)
        if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) < 1e-12:
            continue
        if len(strictly_inside(points, tri, -eps)) == 0:
            out.add(tri)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints one acceptance line."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
