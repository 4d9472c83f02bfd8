"""Geometric verification of loop candidates.

The graph verifier triangulates the matched keypoints of each frame and
measures how many Delaunay edges the two graphs have in common. Aliased
frames with the right descriptors in the wrong spatial layout produce
unrelated triangulations and score near zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from .delaunay import TopoGraph, delaunay
from .errors import DegenerateTriangulationError, InsufficientPointsError
from .features import FrameFeatures
from .matching import Match, RansacParams, match_arrays, mutual_nn_match, ransac_fundamental

DEFAULT_TOP_T = 50
DEFAULT_ZETA_T = 0.55
MIN_MATCHES = 8


@dataclass(frozen=True)
class VerificationResult:
    zeta: float
    accepted: bool
    public_edge_count: int
    edge_counts: tuple[int, int]
    match_count_used: int
    status: str  # "ok" | "too_few_matches" | "degenerate"
    graphs: tuple[TopoGraph, TopoGraph] | None = None

    @property
    def score(self) -> float:
        return self.zeta

    def dump_text(self) -> str:
        """Both graphs and the similarity, for inspection or plotting."""
        out = [f"zeta {self.zeta!r}", f"status {self.status}"]
        if self.graphs is not None:
            for name, g in zip(("query", "candidate"), self.graphs):
                out.append(f"graph {name}")
                out.append(g.dump_text().rstrip("\n"))
        return "\n".join(out) + "\n"


@dataclass(frozen=True)
class RansacVerification:
    inlier_count: int
    accepted: bool
    match_count_used: int
    status: str  # "ok" | "estimation_failed" | "too_few_matches"

    @property
    def score(self) -> float:
        return float(self.inlier_count)


class GraphComparison(NamedTuple):
    zeta: float
    public_edge_count: int
    edge_counts: tuple[int, int]
    degenerate: bool


def select_top_matches(matches: Sequence[Match], T: int = DEFAULT_TOP_T) -> list[Match]:
    """The ``T`` closest matches by descriptor distance, ties by ``idx_a``."""
    if T < 0:
        raise ValueError(f"T must be >= 0, got {T}")
    return sorted(matches, key=lambda m: (m.descriptor_distance, m.idx_a))[:T]


def compare_graphs(g1: TopoGraph, g2: TopoGraph,
                   correspondence: Mapping | None = None) -> GraphComparison:
    """Public-edge count and similarity of two labelled graphs.

    ``correspondence`` maps labels of ``g1`` to labels of ``g2`` (identity when
    omitted). Vertices without a partner on the other side are removed from
    both graphs before counting.
    """
    corr = dict(correspondence) if correspondence is not None else {l: l for l in g1.labels}
    labels2 = set(g2.labels)
    keep1 = {l for l in g1.labels if l in corr and corr[l] in labels2}
    keep2 = {corr[l] for l in keep1}
    e1 = {
        (a, b) for a, b in g1.labeled_edges() if a in keep1 and b in keep1
    }
    e2 = {
        frozenset(e) for e in g2.labeled_edges() if e[0] in keep2 and e[1] in keep2
    }
    if not e1 or not e2:
        return GraphComparison(0.0, 0, (len(e1), len(e2)), True)
    public = sum(1 for a, b in e1 if frozenset((corr[a], corr[b])) in e2)
    zeta = (public / len(e1)) * (public / len(e2))
    return GraphComparison(zeta, public, (len(e1), len(e2)), False)


def graph_similarity(g1: TopoGraph, g2: TopoGraph, correspondence: Mapping | None = None) -> float:
    return compare_graphs(g1, g2, correspondence).zeta


def _drop_duplicate_points(matches: Sequence[Match], kp_a, kp_b) -> list[Match]:
    """Keep a match only if neither of its keypoints repeats an earlier one."""
    seen_a, seen_b, out = set(), set(), []
    for m in matches:
        pa = tuple(kp_a[m.idx_a].tolist())
        pb = tuple(kp_b[m.idx_b].tolist())
        if pa in seen_a or pb in seen_b:
            continue
        seen_a.add(pa)
        seen_b.add(pb)
        out.append(m)
    return out


def verify_graph(query: FrameFeatures, candidate: FrameFeatures, T: int = DEFAULT_TOP_T,
                 zeta_t: float = DEFAULT_ZETA_T, min_matches: int = MIN_MATCHES,
                 keep_graphs: bool = False) -> VerificationResult:
    """Accept ``candidate`` when the matched-keypoint graphs agree (ζ > ζ_t)."""
    matches = select_top_matches(mutual_nn_match(query, candidate), T)
    matches = _drop_duplicate_points(matches, query.keypoints, candidate.keypoints)
    n = len(matches)
    if n < max(min_matches, 3):
        return VerificationResult(0.0, False, 0, (0, 0), n, "too_few_matches")
    pa, pb = match_arrays(matches, query.keypoints, candidate.keypoints)
    try:
        g1 = delaunay(pa)
        g2 = delaunay(pb)
    except (DegenerateTriangulationError, InsufficientPointsError):
        return VerificationResult(0.0, False, 0, (0, 0), n, "degenerate")
    cmp = compare_graphs(g1, g2)
    status = "degenerate" if cmp.degenerate else "ok"
    accepted = (not cmp.degenerate) and cmp.zeta > zeta_t
    return VerificationResult(cmp.zeta, accepted, cmp.public_edge_count, cmp.edge_counts, n,
                              status, (g1, g2) if keep_graphs else None)


def verify_ransac(query: FrameFeatures, candidate: FrameFeatures,
                  params: RansacParams = RansacParams(), min_inliers: int = 12) -> RansacVerification:
    """Accept ``candidate`` when a fundamental matrix has ``min_inliers`` support."""
    matches = mutual_nn_match(query, candidate)
    F = ransac_fundamental(matches, query.keypoints, candidate.keypoints, params)
    if F is None:
        return RansacVerification(0, False, len(matches), "estimation_failed")
    return RansacVerification(F.inlier_count, F.inlier_count >= min_inliers, len(matches), "ok")
