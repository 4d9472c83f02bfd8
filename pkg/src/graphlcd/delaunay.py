"""Bowyer-Watson Delaunay triangulation of small planar point sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriangulationError, InsufficientPointsError

INCIRCLE_EPS = 1e-9
SUPER_SCALE = 20.0


@dataclass(eq=False)
class TopoGraph:
    """Triangulated point set.

    ``labels[i]`` identifies vertex ``i`` across images (for matched
    keypoints it is the match index). ``edges`` holds vertex-index pairs
    ``(i, j)`` with ``i < j``.
    """

    vertices: np.ndarray
    labels: list
    triangles: list[tuple[int, int, int]]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        if not self.edges:
            self.edges = edges_of(self.triangles)

    def labeled_edges(self) -> set[tuple]:
        return {(self.labels[i], self.labels[j]) for i, j in self.edges}

    def dump_text(self) -> str:
        lines = [f"v {lab} {x!r} {y!r}" for lab, (x, y) in zip(self.labels, self.vertices.tolist())]
        lines += [f"e {self.labels[i]} {self.labels[j]}" for i, j in sorted(self.edges)]
        return "\n".join(lines) + "\n"


def edges_of(triangles) -> set[tuple[int, int]]:
    out = set()
    for a, b, c in triangles:
        for u, v in ((a, b), (b, c), (c, a)):
            out.add((u, v) if u < v else (v, u))
    return out


def orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def incircle(a, b, c, d) -> float:
    """Lifted determinant, scaled to be dimensionless.

    Positive when ``d`` lies inside the circumcircle of the counter-clockwise
    triangle ``abc``.
    """
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad, bd, cd = adx * adx + ady * ady, bdx * bdx + bdy * bdy, cdx * cdx + cdy * cdy
    det = (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )
    la, lb, lc = math.sqrt(ad), math.sqrt(bd), math.sqrt(cd)
    scale = la * lb * lc * max(la, lb, lc)
    if scale == 0.0:
        return 0.0
    return det / scale


def dedupe(points) -> tuple[np.ndarray, list[int]]:
    """Drop exact coordinate repeats, keeping the first occurrence."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    seen, keep = set(), []
    for i, (x, y) in enumerate(pts.tolist()):
        if (x, y) not in seen:
            seen.add((x, y))
            keep.append(i)
    return pts[keep], keep


def delaunay(points, labels=None) -> TopoGraph:
    """Triangulate ``points`` by incremental insertion.

    Points are inserted in lexicographic (x, y) order into a super-triangle
    ``SUPER_SCALE`` times the bounding-box extent. Cocircular configurations
    (within ``INCIRCLE_EPS``) keep the existing triangles, so ties resolve
    deterministically.
    """
    raw = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if labels is None:
        labels = list(range(len(raw)))
    elif len(labels) != len(raw):
        raise ValueError("labels and points differ in length")
    pts, keep = dedupe(raw)
    labels = [labels[i] for i in keep]
    n = len(pts)
    if n < 3:
        raise InsufficientPointsError(f"need 3 distinct points, got {n}")

    lo = pts.min(0)
    extent = float((pts.max(0) - lo).max())
    norm = (pts - lo) / extent
    if _all_collinear(norm):
        raise DegenerateTriangulationError("all points are collinear")

    center = (norm.max(0) + norm.min(0)) / 2.0
    s = SUPER_SCALE
    work = [tuple(p) for p in norm.tolist()] + [
        (center[0] - s, center[1] - s),
        (center[0] + s, center[1] - s),
        (center[0], center[1] + s),
    ]
    sup = {n, n + 1, n + 2}
    tris = [(n, n + 1, n + 2)]

    order = sorted(range(n), key=lambda i: (pts[i, 0], pts[i, 1]))
    for i in order:
        p = work[i]
        bad = [t for t in tris if incircle(work[t[0]], work[t[1]], work[t[2]], p) > INCIRCLE_EPS]
        if not bad:
            bad = [t for t in tris if _contains(work, t, p)][:1]
        bad_set = set(bad)
        count: dict[tuple[int, int], int] = {}
        for a, b, c in bad:
            for u, v in ((a, b), (b, c), (c, a)):
                key = (u, v) if u < v else (v, u)
                count[key] = count.get(key, 0) + 1
        boundary = [
            (u, v)
            for a, b, c in bad
            for u, v in ((a, b), (b, c), (c, a))
            if count[(u, v) if u < v else (v, u)] == 1
        ]
        tris = [t for t in tris if t not in bad_set]
        tris.extend((u, v, i) for u, v in boundary)

    final = [t for t in tris if not (set(t) & sup)]
    if not _covers_hull(norm, final):
        # a finite super-triangle can shadow hull triangles; rebuild those sets
        final = _sweep_flip(norm, order)
    return TopoGraph(pts, labels, final)


def _covers_hull(norm: np.ndarray, tris) -> bool:
    """True when ``tris`` uses every point and its boundary is convex."""
    if len({v for t in tris for v in t}) != len(norm):
        return False
    directed = {(u, v) for a, b, c in tris for u, v in ((a, b), (b, c), (c, a))}
    for u, v in directed:
        if (v, u) in directed:
            continue
        a, b = norm[u], norm[v]
        cross = (b[0] - a[0]) * (norm[:, 1] - a[1]) - (b[1] - a[1]) * (norm[:, 0] - a[0])
        if np.any(cross < -1e-12):
            return False
    return True


def _sweep_flip(norm: np.ndarray, order: list[int]) -> list[tuple[int, int, int]]:
    """Lexicographic sweep triangulation followed by Lawson edge flips."""
    work = [tuple(p) for p in norm.tolist()]
    opp: dict[tuple[int, int], int] = {}

    def add(a, b, c):
        opp[(a, b)], opp[(b, c)], opp[(c, a)] = c, a, b

    def remove(a, b, c):
        for e in ((a, b), (b, c), (c, a)):
            del opp[e]

    # collinear lead-in chain, then fan from the first off-line point
    k = 2
    while orient(work[order[0]], work[order[1]], work[order[k]]) == 0.0:
        k += 1
    chain, p = order[:k], order[k]
    if orient(work[chain[0]], work[chain[-1]], work[p]) > 0:
        for u, v in zip(chain, chain[1:]):
            add(u, v, p)
        hull = chain + [p]
    else:
        for u, v in zip(chain, chain[1:]):
            add(v, u, p)
        hull = [chain[0], p] + chain[:0:-1]
    hull = _ccw_cycle(hull, work)

    for p in order[k + 1:]:
        m = len(hull)
        visible = [
            orient(work[hull[j]], work[hull[(j + 1) % m]], work[p]) < 0.0 for j in range(m)
        ]
        start = next(j for j in range(m) if visible[j] and not visible[j - 1])
        j = start
        while visible[j % m]:
            u, v = hull[j % m], hull[(j + 1) % m]
            add(v, u, p)
            j += 1
        end = j % m
        # hull keeps hull[end] .. hull[start] and gains p between them
        kept, j = [], end
        while True:
            kept.append(hull[j])
            if j == start:
                break
            j = (j + 1) % m
        hull = kept + [p]

    stack = list(opp)
    limit = 50 * len(norm) ** 2
    while stack and limit > 0:
        limit -= 1
        a, b = stack.pop()
        if (a, b) not in opp or (b, a) not in opp:
            continue
        c, d = opp[(a, b)], opp[(b, a)]
        if incircle(work[a], work[b], work[c], work[d]) <= INCIRCLE_EPS:
            continue
        remove(a, b, c)
        remove(b, a, d)
        add(a, d, c)
        add(d, b, c)
        stack.extend([(a, d), (d, b), (b, c), (c, a)])

    tris = set()
    for (a, b), c in opp.items():
        tris.add(min((a, b, c), (b, c, a), (c, a, b)))
    return sorted(tris)


def _ccw_cycle(hull, work):
    area = sum(
        work[u][0] * work[v][1] - work[v][0] * work[u][1]
        for u, v in zip(hull, hull[1:] + hull[:1])
    )
    return hull if area > 0 else hull[::-1]


def _contains(work, t, p) -> bool:
    a, b, c = (work[k] for k in t)
    return orient(a, b, p) >= 0 and orient(b, c, p) >= 0 and orient(c, a, p) >= 0


def _all_collinear(norm: np.ndarray) -> bool:
    a = norm[0]
    far = norm[np.argmax(((norm - a) ** 2).sum(1))]
    d = far - a
    cross = (norm[:, 0] - a[0]) * d[1] - (norm[:, 1] - a[1]) * d[0]
    return bool(np.all(np.abs(cross) <= 1e-12))
