"""Self-terminating hierarchical vocabulary and TF bag-of-words vectors.

Training clusters compact-feature centers recursively. A tentative split of
a node is kept only while the mean quantized radius of its sub-nodes is at
least the average descriptor drift of the training data; once the sub-nodes
would be tighter than the drift, the node becomes a visual word.
"""

from __future__ import annotations

import logging
import math
import os
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compact_db import CompactDatabase, average_radius
from .errors import CorruptionError, DimensionError, FormatError, StateError, ZeroDriftWarning
from .features import FrameFeatures, Scaler
from .kmeans import kmeans

log = logging.getLogger(__name__)

MAGIC = b"LCDV"
VERSION = 1

STOP_CODES = {None: 0, "criterion": 1, "min_count": 2, "max_depth": 3, "root": 4, "forced": 5}
STOP_NAMES = {v: k for k, v in STOP_CODES.items()}


@dataclass(eq=False)
class VocabNode:
    center: np.ndarray
    depth: int
    children: list[int] = field(default_factory=list)
    word_id: int = -1
    # leaves: why splitting stopped; internal nodes: None, or "forced" for a
    # root split kept although its sub-nodes were tighter than the drift
    stop_reason: str | None = None
    # mean sub-node radius of the committed (internal) or tentative
    # (criterion leaf) split; NaN when no split was evaluated
    theta_bar: float = math.nan

    @property
    def is_leaf(self) -> bool:
        return not self.children


def subnode_radius(members, md) -> float:
    """Mean L2 distance of ``members`` from the sub-node center ``md``."""
    members = np.atleast_2d(np.asarray(members, dtype=np.float64))
    if len(members) == 0:
        raise ValueError("sub-node has no members")
    return float(np.linalg.norm(members - np.asarray(md, dtype=np.float64), axis=1).mean())


class VocabularyTree:
    def __init__(self, nodes: list[VocabNode], k: int, gamma_bar: float, scaler: Scaler,
                 train_seed: int = 0):
        if not nodes:
            raise ValueError("a vocabulary needs at least a root node")
        self.nodes = nodes
        self.k = k
        self.gamma_bar = gamma_bar
        self.scaler = scaler
        self.dim = scaler.dim
        self.train_seed = train_seed
        self.root = 0
        self._child_centers = {
            i: np.stack([nodes[c].center for c in n.children]).astype(np.float64)
            for i, n in enumerate(nodes)
            if n.children
        }

    @property
    def leaves(self) -> list[VocabNode]:
        return sorted((n for n in self.nodes if n.is_leaf), key=lambda n: n.word_id)

    @property
    def word_count(self) -> int:
        return sum(1 for n in self.nodes if n.is_leaf)

    @property
    def max_depth(self) -> int:
        return max(n.depth for n in self.nodes)

    def stop_reason_histogram(self) -> dict[str, int]:
        return dict(Counter(n.stop_reason for n in self.nodes if n.is_leaf))

    def quantize(self, descriptor) -> int:
        """Greedy descent to the nearest child at every level."""
        d = np.asarray(descriptor, dtype=np.float64).reshape(-1)
        if d.shape[0] != self.dim:
            raise DimensionError(f"descriptor dim {d.shape[0]}, vocabulary dim {self.dim}")
        node = self.root
        while self.nodes[node].children:
            c = self._child_centers[node]
            dist = ((c - d) ** 2).sum(1)
            node = self.nodes[node].children[int(np.argmin(dist))]
        return self.nodes[node].word_id

    def quantize_many(self, descriptors) -> np.ndarray:
        x = np.asarray(descriptors, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"descriptor shape {x.shape}, vocabulary dim {self.dim}")
        at = np.zeros(len(x), dtype=np.int64)
        active = np.ones(len(x), dtype=bool)
        while active.any():
            for node in np.unique(at[active]):
                sel = np.flatnonzero(active & (at == node))
                children = self.nodes[node].children
                if not children:
                    active[sel] = False
                    continue
                c = self._child_centers[node]
                dist = ((x[sel, None, :] - c[None, :, :]) ** 2).sum(-1)
                at[sel] = np.asarray(children)[np.argmin(dist, axis=1)]
        return np.array([self.nodes[n].word_id for n in at], dtype=np.int64)

    def bow_vector(self, frame: FrameFeatures) -> "BowVector":
        return bow_vector(self, frame)


def _theta_bar(members, centers, labels, center_mode):
    radii = []
    for p in range(len(centers)):
        sel = members[labels == p]
        if len(sel) == 0:
            continue
        md = centers[p] if center_mode == "centroid" else np.median(sel, axis=0)
        radii.append(subnode_radius(sel, md))
    return float(np.mean(radii)), len(radii)


def train_auto(db: CompactDatabase, k: int = 10, seed: int = 0, *,
               min_split_count: int | None = None, max_depth: int = 10,
               scaler: Scaler | None = None, center_mode: str = "centroid",
               gamma_bar: float | None = None) -> VocabularyTree:
    """Grow a vocabulary tree whose depth per branch is set by the drift
    criterion.

    ``gamma_bar`` defaults to :func:`average_radius` of ``db``. With a zero
    drift the criterion is disabled and only ``min_split_count`` and
    ``max_depth`` stop the recursion. ``center_mode="median"`` measures
    sub-node radii around component-wise medians instead of centroids.
    """
    if len(db) == 0:
        raise StateError("cannot train a vocabulary on an empty compact database")
    if center_mode not in ("centroid", "median"):
        raise ValueError(f"center_mode must be centroid or median, got {center_mode!r}")
    if k < 2:
        raise ValueError("branching factor must be >= 2")
    min_split = k if min_split_count is None else max(2, min_split_count)
    if gamma_bar is None:
        gamma_bar = average_radius(db)
    use_criterion = gamma_bar > 0
    if not use_criterion:
        warnings.warn("mean drift is 0; vocabulary depth is set by the guards only",
                      ZeroDriftWarning, stacklevel=2)
    data = db.centers
    if scaler is None:
        scaler = Scaler.identity(data.shape[1])
    elif scaler.dim != data.shape[1]:
        raise DimensionError("scaler and database dimensions differ")

    nodes = [VocabNode(data.mean(0).astype(np.float32), 0)]
    stack = [(0, np.arange(len(data)))]
    while stack:
        node_id, idx = stack.pop()
        node = nodes[node_id]
        if node.depth >= max_depth:
            node.stop_reason = "max_depth"
            continue
        if len(idx) < min_split:
            node.stop_reason = "root" if node_id == 0 else "min_count"
            continue
        members = data[idx]
        centers, labels = kmeans(members, k, seed=[seed, node_id])
        theta_bar, nonempty = _theta_bar(members, centers, labels, center_mode)
        if nonempty != k:
            log.debug("node %d: %d non-empty sub-nodes of %d", node_id, nonempty, k)
        tight = use_criterion and theta_bar < gamma_bar
        node.theta_bar = theta_bar
        if tight and node_id != 0:
            node.stop_reason = "criterion"
            continue
        if tight:
            node.stop_reason = "forced"
        pending = []
        for p in range(len(centers)):
            sel = idx[labels == p]
            if len(sel) == 0:
                continue
            node.children.append(len(nodes))
            nodes.append(VocabNode(centers[p].astype(np.float32), node.depth + 1))
            pending.append((len(nodes) - 1, sel))
        stack.extend(reversed(pending))

    _assign_words(nodes)
    return VocabularyTree(nodes, k, float(gamma_bar), scaler, seed)


def _assign_words(nodes):
    word = 0
    stack = [0]
    while stack:
        n = nodes[stack.pop()]
        if n.children:
            stack.extend(reversed(n.children))
        else:
            n.word_id = word
            word += 1


# ---------------------------------------------------------------------------
# bag of words


@dataclass(frozen=True, eq=False)
class BowVector:
    """Sparse word histogram. ``words`` is sorted and unique."""

    words: np.ndarray
    counts: np.ndarray
    total: int

    @classmethod
    def from_words(cls, word_ids) -> "BowVector":
        w, c = np.unique(np.asarray(word_ids, dtype=np.int64), return_counts=True)
        return cls(w, c, int(c.sum()))

    @property
    def empty(self) -> bool:
        return self.total == 0

    @property
    def tf(self) -> np.ndarray:
        if self.total == 0:
            return np.zeros(0)
        return self.counts / self.total

    def normalized(self) -> np.ndarray:
        """Unit-L2 TF weights aligned with :attr:`words`."""
        tf = self.tf
        norm = math.sqrt(math.fsum(tf * tf)) if len(tf) else 0.0
        return tf / norm if norm > 0 else tf

    @property
    def sum_sq(self) -> int:
        """Squared L2 norm of the raw counts (exact integer)."""
        return sum(c * c for c in self.counts.tolist())

    def as_dict(self) -> dict[int, float]:
        return {int(w): float(t) for w, t in zip(self.words, self.tf)}


def bow_vector(tree: VocabularyTree, frame: FrameFeatures) -> BowVector:
    """TF histogram of a (scaled) frame; an empty frame gives an empty vector."""
    if len(frame) == 0:
        return BowVector(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 0)
    return BowVector.from_words(tree.quantize_many(frame.descriptors))


def similarity_from_dot(s: float) -> float:
    s = min(max(s, 0.0), 1.0)
    return 1.0 - math.sqrt(1.0 - s)


def cosine_from_counts(dot: int, sum_sq1: int, sum_sq2: int) -> float:
    """Inner product of the unit-normalized TF vectors.

    The 1/N factors cancel, so integer counts give the same value; with exact
    integer sums, identical histograms give exactly 1.0.
    """
    if dot == 0:
        return 0.0
    return dot / math.sqrt(sum_sq1 * sum_sq2)


def similarity(v1: BowVector, v2: BowVector) -> float:
    """``1 - sqrt(1 - <w1, w2>)`` over unit-normalized TF vectors."""
    if v1.empty or v2.empty:
        return 0.0
    common, i1, i2 = np.intersect1d(v1.words, v2.words, assume_unique=True, return_indices=True)
    if len(common) == 0:
        return 0.0
    dot = sum(a * b for a, b in zip(v1.counts[i1].tolist(), v2.counts[i2].tolist()))
    return similarity_from_dot(cosine_from_counts(dot, v1.sum_sq, v2.sum_sq))


# ---------------------------------------------------------------------------
# serialization

_HEAD = struct.Struct("<4sIIIfQ")
_NODE = struct.Struct("<HH")
_NODE_TAIL = struct.Struct("<iBf")


def vocabulary_bytes(tree: VocabularyTree) -> bytes:
    parts = [
        _HEAD.pack(MAGIC, VERSION, tree.dim, tree.k, tree.gamma_bar, tree.train_seed),
        tree.scaler.mean.astype("<f4").tobytes(),
        tree.scaler.stddev.astype("<f4").tobytes(),
        struct.pack("<I", len(tree.nodes)),
    ]
    for n in tree.nodes:
        parts.append(_NODE.pack(n.depth, len(n.children)))
        parts.append(np.asarray(n.children, dtype="<u4").tobytes())
        parts.append(_NODE_TAIL.pack(n.word_id, STOP_CODES[n.stop_reason], n.theta_bar))
        parts.append(np.asarray(n.center, dtype="<f4").tobytes())
    return b"".join(parts)


def save_vocabulary(tree: VocabularyTree, path: str | os.PathLike) -> None:
    Path(path).write_bytes(vocabulary_bytes(tree))


def load_vocabulary(path: str | os.PathLike) -> VocabularyTree:
    data = Path(path).read_bytes()
    return vocabulary_from_bytes(data, str(path))


def vocabulary_from_bytes(data: bytes, source: str = "<bytes>") -> VocabularyTree:
    if len(data) < _HEAD.size:
        raise FormatError(f"{source}: too short for a vocabulary header")
    magic, version, dim, k, gamma_bar, seed = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    off = _HEAD.size
    try:
        mean = np.frombuffer(data, "<f4", dim, off)
        off += 4 * dim
        std = np.frombuffer(data, "<f4", dim, off)
        off += 4 * dim
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        nodes = []
        for _ in range(count):
            depth, n_children = _NODE.unpack_from(data, off)
            off += _NODE.size
            children = np.frombuffer(data, "<u4", n_children, off).tolist()
            off += 4 * n_children
            word_id, code, theta = _NODE_TAIL.unpack_from(data, off)
            off += _NODE_TAIL.size
            center = np.frombuffer(data, "<f4", dim, off).astype(np.float32)
            off += 4 * dim
            if code not in STOP_NAMES:
                raise FormatError(f"{source}: unknown stop reason code {code}")
            nodes.append(VocabNode(center, depth, children, word_id, STOP_NAMES[code], theta))
    except (struct.error, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise CorruptionError(f"{source}: truncated vocabulary payload") from exc
    if off != len(data):
        raise CorruptionError(f"{source}: {len(data) - off} trailing bytes")
    if any(c >= count for n in nodes for c in n.children):
        raise CorruptionError(f"{source}: child id out of range")
    return VocabularyTree(nodes, k, float(gamma_bar), Scaler(mean, std), int(seed))
