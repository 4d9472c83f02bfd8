"""Descriptor matching and robust two-view geometry.

Mutual nearest neighbour matching, RANSAC estimation of homographies
(normalized DLT) and fundamental matrices (normalized 8-point), and the
two-step projection/verification matcher used to track features between
adjacent frames.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ProjectionAtInfinityError
from .features import FrameFeatures

log = logging.getLogger(__name__)

H_MIN_INLIERS = 4
F_MIN_INLIERS = 8
# Share of F-inliers that a homography must explain for F to count as
# plane-degenerate.
PLANAR_DEGENERACY_RATIO = 0.9
# Enough to find a plane holding 90% of the points at 0.999 confidence.
DEGENERACY_PROBE_ITERATIONS = 50
LO_INNER_ITERATIONS = 10
# another local-optimization round needs this relative cost drop
LO_GAIN = 0.99
# the final polish scores at this many robust sigmas of the inlier residuals
POLISH_SIGMAS = 3.0
POLISH_ROUNDS = 3
# Feature tracking asks for twice the minimal sample: on unrelated frames the
# best chance model explains about one minimal sample plus a few points.
TRACK_MIN_SUPPORT = (2 * H_MIN_INLIERS, 2 * F_MIN_INLIERS)


class Match(NamedTuple):
    idx_a: int
    idx_b: int
    descriptor_distance: float


@dataclass(frozen=True)
class RansacParams:
    reprojection_threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.999
    rng_seed: int = 0

    def __post_init__(self):
        if not self.reprojection_threshold > 0:
            raise ValueError("reprojection_threshold must be > 0")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True, eq=False)
class PlanarTransform:
    kind: str  # "homography" | "fundamental"
    matrix: np.ndarray
    inlier_count: int
    inlier_threshold: float
    inlier_mask: np.ndarray = field(repr=False)
    # Fundamental only: the inliers are explained by a homography as well.
    degenerate: bool = False


@dataclass(frozen=True)
class FMResult:
    matches: list[Match]
    transform: PlanarTransform | None
    status: str  # "ok" | "bad_case"

    @property
    def bad_case(self) -> bool:
        return self.status == "bad_case"


@dataclass(frozen=True)
class TwoStepResult:
    mn: list[Match]
    mp: list[Match]
    mv: list[Match]
    status: str
    projection_model: PlanarTransform | None = None
    verification_model: PlanarTransform | None = None

    @property
    def matches(self) -> list[Match]:
        return self.mv


# ---------------------------------------------------------------------------
# mutual nearest neighbours


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    np.maximum(d, 0.0, out=d)
    return d


def mutual_nn_match(frame_a: FrameFeatures, frame_b: FrameFeatures) -> list[Match]:
    """Pairs ``(i, j)`` that are each other's nearest descriptor (L2).

    Ties go to the lowest index. Reported distances are recomputed exactly
    from the descriptor difference.
    """
    if len(frame_a) == 0 or len(frame_b) == 0:
        return []
    d = _pairwise_sq_dists(frame_a.descriptors, frame_b.descriptors)
    nn_ab = np.argmin(d, axis=1)
    nn_ba = np.argmin(d, axis=0)
    idx_a = np.flatnonzero(nn_ba[nn_ab] == np.arange(len(frame_a)))
    idx_b = nn_ab[idx_a]
    diff = frame_a.descriptors[idx_a].astype(np.float64) - frame_b.descriptors[idx_b]
    dist = np.sqrt((diff * diff).sum(1))
    return [Match(int(i), int(j), float(s)) for i, j, s in zip(idx_a, idx_b, dist)]


def match_arrays(matches: Sequence[Match], points_a, points_b):
    ia = np.fromiter((m.idx_a for m in matches), dtype=np.int64, count=len(matches))
    ib = np.fromiter((m.idx_b for m in matches), dtype=np.int64, count=len(matches))
    pa = np.asarray(points_a, dtype=np.float64).reshape(-1, 2)[ia]
    pb = np.asarray(points_b, dtype=np.float64).reshape(-1, 2)[ib]
    return pa, pb


# ---------------------------------------------------------------------------
# point maps


def homography_project(H: np.ndarray, p) -> tuple[float, float]:
    x, y = p
    u, v, w = np.asarray(H, dtype=np.float64) @ (x, y, 1.0)
    if abs(w) < 1e-12:
        raise ProjectionAtInfinityError(f"point {p} projects to infinity")
    return float(u / w), float(v / w)


def epipolar_distance(F: np.ndarray, p, q) -> float:
    """Distance of ``q`` from the epipolar line ``F p`` in the second image."""
    line = np.asarray(F, dtype=np.float64) @ (p[0], p[1], 1.0)
    norm = math.hypot(line[0], line[1])
    if norm == 0.0:
        return math.inf
    return abs(line[0] * q[0] + line[1] * q[1] + line[2]) / norm


def _project_many(H, pts):
    hom = pts @ H[:, :2].T + H[:, 2]
    w = hom[:, 2]
    ok = np.abs(w) >= 1e-12
    out = np.full((len(pts), 2), np.inf)
    out[ok] = hom[ok, :2] / w[ok, None]
    return out, ok


def _project_batch(Hs, pts):
    """Map ``pts`` (N, 2) through each of ``Hs`` (B, 3, 3); inf where w ~ 0."""
    hom = np.einsum("nj,bij->bni", pts, Hs[:, :, :2]) + Hs[:, None, :, 2]
    w = hom[..., 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hom[..., :2] / w
    out[np.broadcast_to(np.abs(w) < 1e-12, out.shape)] = np.inf
    return out


def _transfer_errors(Hs, pa, pb):
    Hinv = np.linalg.inv(Hs)
    fwd = _project_batch(Hs, pa)
    bwd = _project_batch(Hinv, pb)
    with np.errstate(invalid="ignore", over="ignore"):
        err = np.sqrt(((fwd - pb) ** 2).sum(-1) + ((bwd - pa) ** 2).sum(-1))
    err[~np.isfinite(err)] = np.inf
    return err


def symmetric_transfer_error(H: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """``sqrt(|H pa - pb|^2 + |H^-1 pb - pa|^2)`` per correspondence."""
    H = np.asarray(H, dtype=np.float64)
    try:
        return _transfer_errors(H[None], pa, pb)[0]
    except np.linalg.LinAlgError:
        return np.full(len(pa), np.inf)


def _epipolar_errors(Fs, pa, pb):
    ha = np.c_[pa, np.ones(len(pa))]
    hb = np.c_[pb, np.ones(len(pb))]
    lb = np.einsum("nj,bij->bni", ha, Fs)  # lines in image b
    la = np.einsum("nj,bji->bni", hb, Fs)  # lines in image a
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.abs((lb * hb).sum(-1)) / np.hypot(lb[..., 0], lb[..., 1])
        da = np.abs((la * ha).sum(-1)) / np.hypot(la[..., 0], la[..., 1])
    err = np.maximum(da, db)
    err[~np.isfinite(err)] = np.inf
    return err


def epipolar_errors(F: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Larger of the two point-to-epipolar-line distances per correspondence."""
    return _epipolar_errors(np.asarray(F, dtype=np.float64)[None], pa, pb)[0]


# ---------------------------------------------------------------------------
# minimal and least-squares solvers
#
# The batch solvers take stacked point sets (B, m, 2) and return stacked
# models with a validity mask; the single-model functions wrap them.


def _normalize_batch(P):
    """Isotropic normalization: centroid to the origin, mean distance sqrt(2)."""
    c = P.mean(1)
    mean_dist = np.sqrt(((P - c[:, None, :]) ** 2).sum(-1)).mean(1)
    ok = mean_dist >= 1e-12
    s = np.where(ok, math.sqrt(2.0) / np.where(ok, mean_dist, 1.0), 1.0)
    return (P - c[:, None, :]) * s[:, None, None], c, s, ok


def _similarity(c, s, inverse=False):
    T = np.zeros((len(s), 3, 3))
    if inverse:
        T[:, 0, 0] = T[:, 1, 1] = 1.0 / s
        T[:, :2, 2] = c
    else:
        T[:, 0, 0] = T[:, 1, 1] = s
        T[:, :2, 2] = -s[:, None] * c
    T[:, 2, 2] = 1.0
    return T


def _svd_null(A):
    try:
        return np.linalg.svd(A)[2][:, -1]
    except np.linalg.LinAlgError:
        out = np.full((len(A), A.shape[-1]), np.nan)
        for k, a in enumerate(A):
            try:
                out[k] = np.linalg.svd(a)[2][-1]
            except np.linalg.LinAlgError:
                pass
        return out


def fit_homography_batch(PA: np.ndarray, PB: np.ndarray):
    """Normalized DLT on each of ``B`` point sets; returns ``(Hs, valid)``."""
    a, ca, sa, oka = _normalize_batch(PA)
    b, cb, sb, okb = _normalize_batch(PB)
    B, m = PA.shape[:2]
    A = np.zeros((B, 2 * m, 9))
    x, y, u, v = a[..., 0], a[..., 1], b[..., 0], b[..., 1]
    A[:, 0::2, 0], A[:, 0::2, 1], A[:, 0::2, 2] = -x, -y, -1
    A[:, 0::2, 6], A[:, 0::2, 7], A[:, 0::2, 8] = u * x, u * y, u
    A[:, 1::2, 3], A[:, 1::2, 4], A[:, 1::2, 5] = -x, -y, -1
    A[:, 1::2, 6], A[:, 1::2, 7], A[:, 1::2, 8] = v * x, v * y, v
    Hn = _svd_null(A).reshape(B, 3, 3)
    H = _similarity(cb, sb, inverse=True) @ Hn @ _similarity(ca, sa)
    valid = oka & okb & np.all(np.isfinite(H), axis=(1, 2))
    H[~valid] = np.eye(3)
    h22 = H[:, 2, 2]
    big = np.abs(h22) > 1e-12
    H[big] /= h22[big, None, None]
    H[~big] /= np.linalg.norm(H[~big], axis=(1, 2))[:, None, None]
    valid &= np.abs(np.linalg.det(H)) >= 1e-12
    H[~valid] = np.eye(3)
    return H, valid


def fit_homography(pa: np.ndarray, pb: np.ndarray) -> np.ndarray | None:
    """Normalized DLT; needs >= 4 correspondences."""
    H, ok = fit_homography_batch(np.asarray(pa, float)[None], np.asarray(pb, float)[None])
    return H[0] if ok[0] else None


def fit_fundamental_batch(PA: np.ndarray, PB: np.ndarray, weights=None):
    """Normalized 8-point on each of ``B`` point sets; returns ``(Fs, valid)``."""
    a, ca, sa, oka = _normalize_batch(PA)
    b, cb, sb, okb = _normalize_batch(PB)
    B = len(PA)
    x, y, u, v = a[..., 0], a[..., 1], b[..., 0], b[..., 1]
    A = np.stack([u * x, u * y, u, v * x, v * y, v, x, y, np.ones_like(x)], axis=-1)
    if weights is not None:
        A = A * weights[..., None]
    Fn = _svd_null(A).reshape(B, 3, 3)
    valid = oka & okb & np.all(np.isfinite(Fn), axis=(1, 2))
    Fn[~valid] = np.eye(3)
    U, S, Vt = np.linalg.svd(Fn)
    S[:, 2] = 0.0
    F = _similarity(cb, sb).transpose(0, 2, 1) @ (U * S[:, None, :]) @ Vt @ _similarity(ca, sa)
    norm = np.linalg.norm(F, axis=(1, 2))
    valid &= np.isfinite(norm) & (norm >= 1e-15)
    F[~valid] = np.eye(3)
    F /= np.where(valid, norm, 1.0)[:, None, None]
    # fix the sign so equal inputs give bit-equal outputs
    flat = F.reshape(B, 9)
    k = np.argmax(np.abs(flat), axis=1)
    F[flat[np.arange(B), k] < 0] *= -1.0
    return F, valid


def fit_fundamental(pa: np.ndarray, pb: np.ndarray, weights=None) -> np.ndarray | None:
    """Normalized 8-point algorithm with rank-2 enforcement, ``||F||_F = 1``.

    Optional per-correspondence ``weights`` scale the rows of the linear
    system.
    """
    w = None if weights is None else np.asarray(weights, float)[None]
    F, ok = fit_fundamental_batch(np.asarray(pa, float)[None], np.asarray(pb, float)[None], w)
    return F[0] if ok[0] else None


def refine_fundamental(pa: np.ndarray, pb: np.ndarray, iterations: int = 3) -> np.ndarray | None:
    """8-point fit reweighted towards the Sampson error."""
    F = fit_fundamental(pa, pb)
    ha = np.c_[pa, np.ones(len(pa))]
    hb = np.c_[pb, np.ones(len(pb))]
    for _ in range(iterations):
        if F is None:
            return None
        lb = ha @ F.T
        la = hb @ F
        denom = lb[:, 0] ** 2 + lb[:, 1] ** 2 + la[:, 0] ** 2 + la[:, 1] ** 2
        if np.any(denom <= 0):
            break
        # rows are scaled in pixel units; the normalizing transform only
        # rescales them uniformly, so relative weights carry over
        F_next = fit_fundamental(pa, pb, 1.0 / np.sqrt(denom))
        if F_next is None:
            break
        F = F_next
    return F


def _collinear_batch(P: np.ndarray) -> np.ndarray:
    """True where some three points of a set are collinear (sin angle <= 1e-6)."""
    out = np.zeros(len(P), dtype=bool)
    m = P.shape[1]
    for i in range(m):
        for j in range(i + 1, m):
            for k in range(j + 1, m):
                u, w = P[:, j] - P[:, i], P[:, k] - P[:, i]
                cross = np.abs(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0])
                out |= cross <= 1e-6 * np.hypot(u[:, 0], u[:, 1]) * np.hypot(w[:, 0], w[:, 1])
    return out


def _collinear(p: np.ndarray) -> bool:
    return bool(_collinear_batch(np.asarray(p, float)[None])[0])


def _required_iterations(inlier_ratio, sample_size, confidence, cap):
    if inlier_ratio >= 1.0:
        return 0
    good_sample = inlier_ratio**sample_size
    if good_sample <= 0.0:
        return cap
    denom = math.log1p(-good_sample)
    if denom == 0.0:
        return cap
    return min(cap, int(math.ceil(math.log(1.0 - confidence) / denom)))


def _score(model, pa, pb, error, t):
    err = error(model, pa, pb)
    mask = err < t
    cost = float(np.minimum(err * err, t * t).sum())
    return mask, int(mask.sum()), cost


def _local_refine(model, mask, count, cost, pa, pb, fit, refit, error, t, min_size, rng):
    """Local optimization of a new best hypothesis.

    Least-squares refits on the whole consensus set, plus refits on random
    non-minimal subsets of it, keeping any candidate with better support.
    Another round runs only while the inlier count grows.
    """
    def better(c):
        return (-c[3], c[2]) > (-best[3], best[2])

    best = (model, mask, count, cost)
    for _ in range(LO_INNER_ITERATIONS + 1):
        inl = np.flatnonzero(best[1])
        if len(inl) < min_size:
            break
        improved = False
        trials = [inl]
        subset = min(len(inl), 2 * min_size)
        if subset < len(inl):
            trials += [rng.choice(inl, subset, replace=False) for _ in range(LO_INNER_ITERATIONS)]
        for k, idx in enumerate(trials):
            m = (refit if k == 0 else fit)(pa[idx], pb[idx])
            if m is None:
                continue
            cand = (m, *_score(m, pa, pb, error, t))
            if better(cand):
                improved = improved or cand[2] > best[2] or cand[3] < LO_GAIN * best[3]
                best = cand
        if not improved:
            break
    return best


def _draw_samples(rng, n, size, count):
    if n == size:
        return np.tile(np.arange(n), (count, 1))
    keys = rng.random((count, n))
    return np.argpartition(keys, size - 1, axis=1)[:, :size]


# hypotheses generated per batch start small so easy problems exit early
FIRST_BATCH = 8
MAX_BATCH = 256


def _ransac(pa, pb, sample_size, fit_batch, error_batch, params, skip_batch=None,
            max_iterations=None, refit=None):
    """Hypothesize-and-verify with adaptive stopping; returns (model, mask, count).

    Hypotheses are drawn, fitted and scored in batches, then visited in order,
    so the outcome is the same as one hypothesis at a time.
    """
    n = len(pa)
    rng = np.random.default_rng(params.rng_seed)
    t = params.reprojection_threshold

    def fit(a, b):
        m, ok = fit_batch(a[None], b[None])
        return m[0] if ok[0] else None

    def error(m, a, b):
        return error_batch(m[None], a, b)[0]

    cap = params.max_iterations if max_iterations is None else max_iterations
    best = (None, None, 0, math.inf)
    needed = cap
    it = 0
    batch = FIRST_BATCH
    while it < needed:
        size = min(batch, needed - it)
        batch = min(2 * batch, MAX_BATCH)
        idx = _draw_samples(rng, n, sample_size, size)
        sa, sb = pa[idx], pb[idx]
        usable = np.ones(size, dtype=bool)
        if skip_batch is not None:
            usable &= ~(skip_batch(sa) | skip_batch(sb))
        models = np.zeros((size, 3, 3))
        if usable.any():
            fitted, ok = fit_batch(sa[usable], sb[usable])
            models[usable] = fitted
            usable[np.flatnonzero(usable)[~ok]] = False
        counts = np.zeros(size, dtype=np.int64)
        costs = np.full(size, math.inf)
        if usable.any():
            err = error_batch(models[usable], pa, pb)
            counts[usable] = (err < t).sum(1)
            costs[usable] = np.minimum(err * err, t * t).sum(1)
        for r in range(size):
            it += 1
            if usable[r] and (-costs[r], counts[r]) > (-best[3], best[2]):
                model = models[r]
                mask, count, cost = _score(model, pa, pb, error, t)
                if cost < best[3]:
                    model, mask, count, cost = _local_refine(
                        model, mask, count, cost, pa, pb, fit, refit or fit, error, t,
                        sample_size, rng)
                best = (model, mask, count, cost)
                needed = max(it, _required_iterations(count / n, sample_size, params.confidence, cap))
            if it >= needed:
                break
    if best[0] is not None and best[2] > sample_size:
        for _ in range(POLISH_ROUNDS):
            polished = _tight_polish(best, pa, pb, fit, refit or fit, error, t, sample_size, rng)
            if polished[0] is best[0]:
                break
            best = polished
    return best[:3]


def _tight_polish(best, pa, pb, fit, refit, error, t, min_size, rng):
    """Re-run local optimization scored at a threshold matched to the noise.

    With ``t`` far above the residual spread the truncated cost barely
    rewards precision, so a model bent towards one outlier can win. Scoring
    at a few robust sigmas instead prefers the accurate model; it is kept
    only if its support at ``t`` does not shrink.
    """
    model, mask, count, cost = best
    err = error(model, pa, pb)
    sigma = 1.4826 * float(np.median(err[mask]))
    tf = float(np.clip(POLISH_SIGMAS * sigma, 0.1 * t, t))
    m2, k2, c2 = _score(model, pa, pb, error, tf)
    cand = _local_refine(model, m2, k2, c2, pa, pb, fit, refit, error, tf, min_size, rng)[0]
    mask, k, c = _score(cand, pa, pb, error, t)
    if k >= count:
        return (cand, mask, k, c)
    return best


def ransac_homography(matches: Sequence[Match], points_a, points_b,
                      params: RansacParams = RansacParams()) -> PlanarTransform | None:
    """Robust homography a -> b, or ``None`` when support is below 4 inliers."""
    if len(matches) < H_MIN_INLIERS:
        return None
    pa, pb = match_arrays(matches, points_a, points_b)
    return _ransac_h(pa, pb, params)


def _safe_transfer_errors(Hs, pa, pb):
    try:
        return _transfer_errors(Hs, pa, pb)
    except np.linalg.LinAlgError:
        return np.stack([symmetric_transfer_error(H, pa, pb) for H in Hs])


def _ransac_h(pa, pb, params, max_iterations=None):
    H, mask, count = _ransac(pa, pb, 4, fit_homography_batch, _safe_transfer_errors, params,
                             _collinear_batch, max_iterations)
    if H is None or count < H_MIN_INLIERS:
        return None
    return PlanarTransform("homography", H, count, params.reprojection_threshold, mask)


def ransac_fundamental(matches: Sequence[Match], points_a, points_b,
                       params: RansacParams = RansacParams()) -> PlanarTransform | None:
    """Robust fundamental matrix, or ``None`` when support is below 8 inliers.

    The result is flagged ``degenerate`` when a homography explains at least
    ``PLANAR_DEGENERACY_RATIO`` of its inliers, i.e. the scene is (close to)
    planar or the camera purely rotated and F is not determined.
    """
    if len(matches) < F_MIN_INLIERS:
        return None
    pa, pb = match_arrays(matches, points_a, points_b)
    F, mask, count = _ransac(pa, pb, 8, fit_fundamental_batch, _epipolar_errors, params,
                             refit=refine_fundamental)
    if F is None or count < F_MIN_INLIERS:
        return None
    h = _ransac_h(pa[mask], pb[mask], params, DEGENERACY_PROBE_ITERATIONS)
    degenerate = h is not None and h.inlier_count >= PLANAR_DEGENERACY_RATIO * count
    return PlanarTransform("fundamental", F, count, params.reprojection_threshold, mask, degenerate)


# ---------------------------------------------------------------------------
# two-step matcher


def _select_model(H, F, min_support=(H_MIN_INLIERS, F_MIN_INLIERS)):
    h_ok = H is not None and H.inlier_count >= min_support[0]
    f_ok = F is not None and not F.degenerate and F.inlier_count >= min_support[1]
    if not h_ok and not f_ok:
        return None
    if h_ok and (not f_ok or H.inlier_count >= F.inlier_count):
        return H
    return F


def _claim_nearest(dist: np.ndarray, radius: float):
    """Each row picks its nearest column within ``radius``; a column goes to
    the row that is closest to it, the other claimants are dropped."""
    if dist.size == 0:
        return []
    j = np.argmin(dist, axis=1)
    d = dist[np.arange(len(dist)), j]
    rows = np.flatnonzero(d < radius)
    order = sorted(rows, key=lambda i: (d[i], i))
    taken, pairs = set(), []
    for i in order:
        if j[i] not in taken:
            taken.add(j[i])
            pairs.append((int(i), int(j[i])))
    pairs.sort()
    return pairs


def fm(m1: Sequence[Match], p1, p2, mode: str, params: RansacParams = RansacParams(),
       desc1=None, desc2=None,
       min_support: tuple[int, int] = (H_MIN_INLIERS, F_MIN_INLIERS)) -> FMResult:
    """Estimate H and F from ``m1`` and keep the better-supported model.

    ``mode="verification"`` returns the winning model's inliers among ``m1``.
    ``mode="projection"`` maps every keypoint of ``p1`` through the model
    (point for H, epipolar line for F) and pairs it with the nearest keypoint
    of ``p2`` inside the RANSAC threshold.

    A model with fewer inliers than ``min_support`` (homography, fundamental)
    counts as failed.
    """
    if mode not in ("projection", "verification"):
        raise ValueError(f"unknown mode {mode!r}")
    m1 = list(m1)
    H = ransac_homography(m1, p1, p2, params)
    F = ransac_fundamental(m1, p1, p2, params)
    model = _select_model(H, F, min_support)
    if model is None:
        return FMResult([], None, "bad_case")

    if mode == "verification":
        kept = [m for m, keep in zip(m1, model.inlier_mask) if keep]
        return FMResult(kept, model, "ok")

    p1 = np.asarray(p1, dtype=np.float64).reshape(-1, 2)
    p2 = np.asarray(p2, dtype=np.float64).reshape(-1, 2)
    if model.kind == "homography":
        proj, _ = _project_many(model.matrix, p1)
        with np.errstate(invalid="ignore", over="ignore"):
            dist = np.sqrt(((proj[:, None, :] - p2[None, :, :]) ** 2).sum(-1))
    else:
        lines = np.c_[p1, np.ones(len(p1))] @ model.matrix.T
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.abs(lines[:, :2] @ p2.T + lines[:, 2:3]) / np.hypot(
                lines[:, 0], lines[:, 1])[:, None]
    dist[~np.isfinite(dist)] = np.inf
    pairs = _claim_nearest(dist, params.reprojection_threshold)
    out = []
    for i, j in pairs:
        if desc1 is not None and desc2 is not None:
            diff = np.asarray(desc1[i], dtype=np.float64) - desc2[j]
            dd = float(np.sqrt(diff @ diff))
        else:
            dd = math.nan
        out.append(Match(i, j, dd))
    return FMResult(out, model, "ok")


def two_step_match(frame_a: FrameFeatures, frame_b: FrameFeatures,
                   params: RansacParams = RansacParams()) -> TwoStepResult:
    """mNN matches, then projection through a first RANSAC model, then
    verification of the projected matches by a second RANSAC.

    Both stages require ``TRACK_MIN_SUPPORT`` inliers, so unrelated frames
    come back empty instead of with chance matches.
    """
    if len(frame_a) == 0 or len(frame_b) == 0:
        return TwoStepResult([], [], [], "empty_frame")
    mn = mutual_nn_match(frame_a, frame_b)
    if not mn:
        return TwoStepResult([], [], [], "no_matches")
    proj = fm(mn, frame_a.keypoints, frame_b.keypoints, "projection", params,
              frame_a.descriptors, frame_b.descriptors, TRACK_MIN_SUPPORT)
    if proj.bad_case or not proj.matches:
        return TwoStepResult(mn, [], [], "projection_failed", proj.transform)
    ver = fm(proj.matches, frame_a.keypoints, frame_b.keypoints, "verification", params,
             min_support=TRACK_MIN_SUPPORT)
    if ver.bad_case:
        return TwoStepResult(mn, proj.matches, [], "verification_failed", proj.transform)
    return TwoStepResult(mn, proj.matches, ver.matches, "ok", proj.transform, ver.transform)
