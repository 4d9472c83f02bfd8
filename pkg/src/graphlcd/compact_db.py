"""Aggregation of tracked features into compact groups and drift estimation.

Each group keeps a running center, the largest observed drift of a member
descriptor from that center, and the number of absorbed descriptors. Groups
are fed by adjacent-frame matches only; a feature that is not matched to the
previous frame opens a new group.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, StateError, ZeroDriftWarning
from .features import FrameFeatures
from .matching import Match


@dataclass(frozen=True, eq=False)
class CompactGroup:
    center: np.ndarray
    radius: float
    count: int


class CompactDatabase:
    """Growing set of compact groups.

    With ``keep_members=True`` every absorbed descriptor is retained so the
    exact maximum member distance can be inspected with :meth:`exact_radius`;
    use only at small scale.
    """

    def __init__(self, dim: int | None = None, keep_members: bool = False):
        self.dim = dim
        self.keep_members = keep_members
        self._centers = np.zeros((0, dim or 0))
        self._radii = np.zeros(0)
        self._counts = np.zeros(0, dtype=np.int64)
        self._size = 0
        self._members: list[list[np.ndarray]] = []
        self.active_map: dict[int, int] = {}
        self.frames_ingested = 0
        self.features_ingested = 0

    # storage -------------------------------------------------------------

    def _reserve(self, extra):
        need = self._size + extra
        if need <= len(self._radii):
            return
        cap = max(need, 2 * len(self._radii), 64)
        centers = np.zeros((cap, self.dim))
        centers[: self._size] = self._centers[: self._size]
        radii = np.zeros(cap)
        radii[: self._size] = self._radii[: self._size]
        counts = np.zeros(cap, dtype=np.int64)
        counts[: self._size] = self._counts[: self._size]
        self._centers, self._radii, self._counts = centers, radii, counts

    def _new_groups(self, descriptors: np.ndarray) -> np.ndarray:
        n = len(descriptors)
        self._reserve(n)
        ids = np.arange(self._size, self._size + n)
        self._centers[ids] = descriptors
        self._radii[ids] = 0.0
        self._counts[ids] = 1
        self._size += n
        if self.keep_members:
            self._members.extend([d.copy()] for d in descriptors)
        return ids

    def _check_dim(self, frame: FrameFeatures):
        if self.dim is None:
            self.dim = frame.dim
            self._centers = np.zeros((0, self.dim))
        elif frame.dim != self.dim and len(frame):
            raise DimensionError(f"frame {frame.frame_id}: dim {frame.dim}, database dim {self.dim}")

    # views -----------------------------------------------------------------

    def __len__(self) -> int:
        return self._size

    @property
    def centers(self) -> np.ndarray:
        return self._centers[: self._size]

    @property
    def radii(self) -> np.ndarray:
        return self._radii[: self._size]

    @property
    def counts(self) -> np.ndarray:
        return self._counts[: self._size]

    @property
    def groups(self) -> list[CompactGroup]:
        return [
            CompactGroup(self._centers[k].copy(), float(self._radii[k]), int(self._counts[k]))
            for k in range(self._size)
        ]

    @classmethod
    def from_groups(cls, centers, radii, counts) -> "CompactDatabase":
        """Build a database directly from group statistics (no tracking state)."""
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        db = cls(centers.shape[1])
        db._new_groups(centers)
        db._radii[: db._size] = np.asarray(radii, dtype=np.float64)
        db._counts[: db._size] = np.asarray(counts, dtype=np.int64)
        db.features_ingested = int(db.counts.sum())
        return db

    # ingestion -----------------------------------------------------------

    def ingest_first_frame(self, frame: FrameFeatures) -> None:
        if self._size or self.frames_ingested:
            raise StateError("ingest_first_frame called on a non-empty database")
        self._check_dim(frame)
        ids = self._new_groups(frame.descriptors.astype(np.float64))
        self.active_map = {i: int(g) for i, g in enumerate(ids)}
        self.frames_ingested = 1
        self.features_ingested += len(frame)

    def ingest_next_frame(self, frame: FrameFeatures, matches: Sequence[Match]) -> None:
        """Absorb matched features into the groups of their previous-frame
        partners; every unmatched feature becomes a singleton group.

        ``matches`` pair previous-frame indices (``idx_a``) with indices into
        ``frame`` (``idx_b``).
        """
        if not self.frames_ingested:
            raise StateError("ingest_first_frame must be called first")
        self._check_dim(frame)
        desc = frame.descriptors.astype(np.float64)
        new_map: dict[int, int] = {}
        for m in matches:
            if m.idx_a not in self.active_map:
                raise IndexError(f"match references unknown previous feature {m.idx_a}")
            if not 0 <= m.idx_b < len(frame):
                raise IndexError(f"match references feature {m.idx_b} of a {len(frame)}-feature frame")
            if m.idx_b in new_map:
                raise IndexError(f"feature {m.idx_b} matched twice")
            k = self.active_map[m.idx_a]
            d = desc[m.idx_b]
            chi = self._counts[k]
            center = (self._centers[k] * chi + d) / (chi + 1)
            self._centers[k] = center
            self._radii[k] = max(float(np.linalg.norm(center - d)), self._radii[k])
            self._counts[k] = chi + 1
            if self.keep_members:
                self._members[k].append(d.copy())
            new_map[m.idx_b] = k
        unmatched = [i for i in range(len(frame)) if i not in new_map]
        if unmatched:
            ids = self._new_groups(desc[unmatched])
            new_map.update(zip(unmatched, (int(g) for g in ids)))
        self.active_map = new_map
        self.frames_ingested += 1
        self.features_ingested += len(frame)

    def ingest(self, frame: FrameFeatures, matches: Sequence[Match] | None = None) -> None:
        if not self.frames_ingested:
            self.ingest_first_frame(frame)
        else:
            self.ingest_next_frame(frame, matches or [])

    # statistics --------------------------------------------------------

    def exact_radius(self, k: int) -> float:
        """Max distance of any recorded member from the current center."""
        if not self.keep_members:
            raise StateError("database was built without keep_members=True")
        members = np.stack(self._members[k])
        return float(np.linalg.norm(members - self._centers[k], axis=1).max())

    def members(self, k: int) -> np.ndarray:
        if not self.keep_members:
            raise StateError("database was built without keep_members=True")
        return np.stack(self._members[k])

    def dump_text(self) -> str:
        """One line per group: count, radius, then the center components."""
        buf = io.StringIO()
        for k in range(self._size):
            vals = " ".join(repr(float(v)) for v in self._centers[k])
            buf.write(f"{int(self._counts[k])} {float(self._radii[k])!r} {vals}\n")
        return buf.getvalue()


def average_radius(db: CompactDatabase) -> float:
    """Mean radius over groups that drifted at all (radius > 0).

    Returns 0.0 and emits :class:`ZeroDriftWarning` when no group has a
    positive radius.
    """
    if len(db) == 0:
        raise StateError("average_radius of an empty database")
    r = db.radii
    tracked = r[r > 0]
    if len(tracked) == 0:
        warnings.warn("no compact group has a positive radius; mean drift is 0",
                      ZeroDriftWarning, stacklevel=2)
        return 0.0
    return float(tracked.mean())
