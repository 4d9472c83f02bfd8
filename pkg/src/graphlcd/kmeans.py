import numpy as np

MAX_ITER = 100


def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * x @ c.T
    np.maximum(d, 0.0, out=d)
    return d


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Distance-weighted (k-means++) seeding."""
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a chosen center
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[i] = x[idx]
        np.minimum(closest, _sq_dists(x, centers[i : i + 1])[:, 0], out=closest)
    return centers


def kmeans(points, k: int, seed: int = 0, max_iter: int = MAX_ITER):
    """Lloyd's k-means with k-means++ seeding.

    Returns ``(centers, assignments)``. Lloyd's fixed point is then refined
    by single-point moves, so no one point can switch clusters and lower the
    objective. When there are no more points than clusters every point
    becomes its own center (so fewer than ``k`` centers may come back).
    Empty clusters are re-seeded with the point farthest from their center.
    """
    if k <= 0:
        raise ValueError(f"k must be >= 1, got {k}")
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("points must be a non-empty 2-D array")
    n = len(x)
    if n <= k:
        return x.copy(), np.arange(n)

    rng = np.random.default_rng(seed)
    centers = kmeans_pp_init(x, k, rng)
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(x, centers)
        new_labels = np.argmin(d, axis=1)
        counts = np.bincount(new_labels, minlength=k)
        if np.any(counts == 0):
            own = d[np.arange(n), new_labels]
            for j in np.flatnonzero(counts == 0):
                own[counts[new_labels] <= 1] = -1.0
                far = int(np.argmax(own))
                counts[new_labels[far]] -= 1
                new_labels[far] = j
                counts[j] = 1
                own[far] = -1.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / np.bincount(labels, minlength=k)[:, None]
    centers, labels = _single_moves(x, centers, labels, k, max_iter)
    return centers, labels


def _single_moves(x, centers, labels, k, max_passes):
    """Move single points between clusters while that lowers the objective.

    A Lloyd fixed point can still be improved this way because moving a
    point also shifts both centers. Candidates are found in bulk and then
    re-checked one at a time against the updated centers.
    """
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    centers = centers.copy()
    labels = labels.copy()
    for _ in range(max_passes):
        d = _sq_dists(x, centers)
        own = labels
        n_own = counts[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            loss = np.where(n_own > 1, n_own / (n_own - 1) * d[np.arange(len(x)), own], -np.inf)
        gain = counts / (counts + 1) * d
        gain[np.arange(len(x)), own] = np.inf
        candidates = np.flatnonzero(gain.min(1) < loss - 1e-12)
        moved = False
        for i in candidates:
            a = labels[i]
            if counts[a] <= 1:
                continue
            da = ((x[i] - centers[a]) ** 2).sum()
            db = ((centers - x[i]) ** 2).sum(1)
            delta = counts / (counts + 1) * db - counts[a] / (counts[a] - 1) * da
            delta[a] = np.inf
            b = int(np.argmin(delta))
            if not delta[b] < -1e-12 * max(da, 1e-300):
                continue
            centers[a] = (centers[a] * counts[a] - x[i]) / (counts[a] - 1)
            centers[b] = (centers[b] * counts[b] + x[i]) / (counts[b] + 1)
            counts[a] -= 1
            counts[b] += 1
            labels[i] = b
            moved = True
        if not moved:
            break
    return centers, labels


def objective(points, centers, labels) -> float:
    x = np.asarray(points, dtype=np.float64)
    return float(((x - centers[labels]) ** 2).sum())
