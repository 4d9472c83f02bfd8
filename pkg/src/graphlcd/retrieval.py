"""Inverted-index frame database proposing one loop candidate per query."""

from __future__ import annotations

import bisect
from fractions import Fraction
from dataclasses import dataclass

from .errors import SequenceError
from .features import FrameFeatures
from .vocabulary import BowVector, cosine_from_counts, similarity_from_dot

DEFAULT_ETA = 100


@dataclass(frozen=True)
class LoopCandidate:
    query_id: int
    candidate_id: int
    bow_similarity: float


class FrameDatabase:
    """Frames in insertion order with postings ``word -> [(frame_id, count)]``.

    Counts are kept as integers with each frame's squared norm, so a query
    scores every frame exactly as :func:`similarity` would.
    """

    def __init__(self):
        self.entries: dict[int, tuple[BowVector, FrameFeatures | None]] = {}
        self.inverted_index: dict[int, list[tuple[int, int]]] = {}
        self.sum_sq: dict[int, int] = {}
        self._posting_ids: dict[int, list[int]] = {}
        self.next_id = 0

    def __len__(self):
        return len(self.entries)

    def add_frame(self, frame_id: int, bow: BowVector, features: FrameFeatures | None = None):
        if frame_id != self.next_id:
            raise SequenceError(f"expected frame id {self.next_id}, got {frame_id}")
        self.entries[frame_id] = (bow, features)
        self.sum_sq[frame_id] = bow.sum_sq
        for word, count in zip(bow.words.tolist(), bow.counts.tolist()):
            self.inverted_index.setdefault(word, []).append((frame_id, count))
            self._posting_ids.setdefault(word, []).append(frame_id)
        self.next_id += 1

    def scores(self, bow: BowVector, max_frame_id: int) -> dict[int, float]:
        """Similarity of ``bow`` to every frame with id <= ``max_frame_id``
        that shares at least one word with it."""
        dots = self._dots(bow, max_frame_id)
        q_sq = bow.sum_sq
        return {
            fid: similarity_from_dot(cosine_from_counts(dot, q_sq, self.sum_sq[fid]))
            for fid, dot in dots.items()
        }

    def _dots(self, bow: BowVector, max_frame_id: int) -> dict[int, int]:
        dots: dict[int, int] = {}
        if bow.empty or max_frame_id < 0:
            return dots
        for word, q in zip(bow.words.tolist(), bow.counts.tolist()):
            postings = self.inverted_index.get(word)
            if not postings:
                continue
            stop = bisect.bisect_right(self._posting_ids[word], max_frame_id)
            for fid, c in postings[:stop]:
                dots[fid] = dots.get(fid, 0) + q * c
        return dots

    def query_candidate(self, bow: BowVector, query_id: int, eta: int = DEFAULT_ETA,
                        alpha: float = 0.0) -> LoopCandidate | None:
        """Best-scoring frame with id < ``query_id - eta``.

        Ties go to the smaller frame id; ``None`` when nothing eligible shares
        a word or the best score is below ``alpha``. Frames are ranked by the
        exact rational dot**2 / |f|**2, so ties are detected without rounding.
        """
        dots = self._dots(bow, query_id - eta - 1)
        if not dots:
            return None
        fid = min(dots, key=lambda f: (-Fraction(dots[f] ** 2, self.sum_sq[f]), f))
        d = similarity_from_dot(cosine_from_counts(dots[fid], bow.sum_sq, self.sum_sq[fid]))
        if d < alpha:
            return None
        return LoopCandidate(query_id, fid, d)


def add_frame(db: FrameDatabase, frame_id: int, bow: BowVector, features=None) -> None:
    db.add_frame(frame_id, bow, features)


def query_candidate(db: FrameDatabase, bow: BowVector, query_id: int, eta: int = DEFAULT_ETA,
                    alpha: float = 0.0) -> LoopCandidate | None:
    return db.query_candidate(bow, query_id, eta, alpha)
