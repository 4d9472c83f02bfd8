"""Training, detection and evaluation over feature-file sequences."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .compact_db import CompactDatabase, average_radius
from .errors import DimensionError, InsufficientSequenceError, ParseError
from .features import FrameFeatures, apply_scaler, fit_scaler, load_sequence
from .matching import RansacParams, two_step_match
from .retrieval import DEFAULT_ETA, FrameDatabase
from .synth import read_ground_truth
from .verification import DEFAULT_TOP_T, DEFAULT_ZETA_T, verify_graph, verify_ransac
from .vocabulary import VocabularyTree, load_vocabulary, save_vocabulary, train_auto

log = logging.getLogger(__name__)

VERIFIERS = ("graph", "ransac12", "ransac20", "none")
RECORD_HEADER = ["query_id", "candidate_id", "bow_sim", "verify_score", "accepted", "verifier"]
PR_HEADER = ["threshold", "precision", "recall", "tp", "fp", "fn"]


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainSummary:
    frames: int
    groups: int
    gamma_bar: float
    word_count: int
    max_depth: int
    stop_reasons: dict[str, int]
    tracked_pairs: int

    def format(self) -> str:
        reasons = ", ".join(f"{k}={v}" for k, v in sorted(self.stop_reasons.items()))
        return (
            f"frames: {self.frames}\n"
            f"compact groups: {self.groups}\n"
            f"tracked frame pairs: {self.tracked_pairs}\n"
            f"mean drift: {self.gamma_bar!r}\n"
            f"words: {self.word_count}\n"
            f"max depth: {self.max_depth}\n"
            f"stop reasons: {reasons}\n"
        )


def build_compact_database(frames: Sequence[FrameFeatures],
                           params: RansacParams = RansacParams()) -> tuple[CompactDatabase, int]:
    """Track features through consecutive frames; returns the database and
    the number of frame pairs that produced matches."""
    db = CompactDatabase(dim=frames[0].dim)
    db.ingest_first_frame(frames[0])
    tracked = 0
    for prev, cur in zip(frames, frames[1:]):
        result = two_step_match(prev, cur, params)
        if result.mv:
            tracked += 1
        else:
            log.debug("frames %d/%d not tracked: %s", prev.frame_id, cur.frame_id, result.status)
        db.ingest_next_frame(cur, result.mv)
    return db, tracked


def train_vocabulary(frames: Sequence[FrameFeatures], k: int = 10, seed: int = 0,
                     max_depth: int = 10, params: RansacParams = RansacParams()
                     ) -> tuple[VocabularyTree, TrainSummary]:
    if len(frames) < 2:
        raise InsufficientSequenceError(f"training needs >= 2 frames, got {len(frames)}")
    scaler = fit_scaler(frames)
    scaled = [apply_scaler(scaler, f) for f in frames]
    db, tracked = build_compact_database(scaled, params)
    gamma_bar = average_radius(db)
    tree = train_auto(db, k=k, seed=seed, max_depth=max_depth, scaler=scaler,
                      gamma_bar=gamma_bar)
    summary = TrainSummary(len(frames), len(db), gamma_bar, tree.word_count, tree.max_depth,
                           tree.stop_reason_histogram(), tracked)
    return tree, summary


def run_train(features_dir: str | os.PathLike, output_vocab_path: str | os.PathLike,
              k: int = 10, seed: int = 0, max_depth: int = 10,
              params: RansacParams = RansacParams()) -> TrainSummary:
    frames = load_sequence(features_dir)
    tree, summary = train_vocabulary(frames, k=k, seed=seed, max_depth=max_depth, params=params)
    save_vocabulary(tree, output_vocab_path)
    return summary


# ---------------------------------------------------------------------------
# detection


@dataclass(frozen=True)
class DetectionRecord:
    query_id: int
    candidate_id: int | None
    bow_similarity: float | None
    verify_score: float | None
    accepted: bool
    verifier: str

    def __post_init__(self):
        if self.accepted and self.candidate_id is None:
            raise ValueError("an accepted record needs a candidate")


@dataclass
class StageTimer:
    totals: dict[str, float] = field(default_factory=lambda: defaultdict(float))
    calls: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def add(self, stage: str, seconds: float):
        self.totals[stage] += seconds
        self.calls[stage] += 1

    def mean_ms(self) -> dict[str, float]:
        return {k: 1000.0 * self.totals[k] / self.calls[k] for k in self.totals}

    def format(self) -> str:
        return "".join(f"{k}: {v:.3f} ms\n" for k, v in self.mean_ms().items())


def detect(frames: Iterable[FrameFeatures], tree: VocabularyTree, eta: int = DEFAULT_ETA,
           zeta_t: float = DEFAULT_ZETA_T, top_t: int = DEFAULT_TOP_T, verifier: str = "graph",
           alpha: float = 0.0, params: RansacParams = RansacParams(),
           timer: StageTimer | None = None, graph_dump_dir: str | os.PathLike | None = None
           ) -> list[DetectionRecord]:
    """Stream ``frames`` through retrieval and verification, one record each."""
    if verifier not in VERIFIERS:
        raise ValueError(f"verifier must be one of {VERIFIERS}, got {verifier!r}")
    clock = time.perf_counter
    db = FrameDatabase()
    records = []
    for i, frame in enumerate(frames):
        if frame.dim != tree.dim:
            raise DimensionError(f"frame {frame.frame_id}: dim {frame.dim}, vocabulary dim {tree.dim}")
        t0 = clock()
        scaled = apply_scaler(tree.scaler, frame)
        t1 = clock()
        bow = tree.bow_vector(scaled)
        t2 = clock()
        cand = db.query_candidate(bow, i, eta, alpha)
        t3 = clock()
        db.add_frame(i, bow, scaled)
        t4 = clock()
        if timer is not None:
            for stage, dt in (("scale", t1 - t0), ("bow", t2 - t1), ("query", t3 - t2),
                              ("insert", t4 - t3)):
                timer.add(stage, dt)
        if cand is None:
            records.append(DetectionRecord(i, None, None, None, False, verifier))
            continue
        other = db.entries[cand.candidate_id][1]
        score, accepted = _verify(verifier, scaled, other, zeta_t, top_t, params,
                                  graph_dump_dir, i, cand.candidate_id)
        if timer is not None:
            timer.add("verify", clock() - t4)
        records.append(DetectionRecord(i, cand.candidate_id, cand.bow_similarity, score,
                                       accepted, verifier))
    return records


def _verify(verifier, query, candidate, zeta_t, top_t, params, dump_dir, qid, cid):
    if verifier == "none":
        return None, True
    if verifier == "graph":
        res = verify_graph(query, candidate, top_t, zeta_t, keep_graphs=dump_dir is not None)
        if dump_dir is not None:
            Path(dump_dir).mkdir(parents=True, exist_ok=True)
            (Path(dump_dir) / f"{qid:06d}_{cid:06d}.graph.txt").write_text(res.dump_text())
        return res.zeta, res.accepted
    res = verify_ransac(query, candidate, params, 12 if verifier == "ransac12" else 20)
    return float(res.inlier_count), res.accepted


def run_detect(features_dir: str | os.PathLike, vocab_path: str | os.PathLike,
               output_csv: str | os.PathLike, eta: int = DEFAULT_ETA,
               zeta_t: float = DEFAULT_ZETA_T, top_t: int = DEFAULT_TOP_T,
               verifier: str = "graph", alpha: float = 0.0,
               params: RansacParams = RansacParams(), timer: StageTimer | None = None,
               graph_dump_dir: str | os.PathLike | None = None) -> list[DetectionRecord]:
    tree = load_vocabulary(vocab_path)
    frames = load_sequence(features_dir)
    records = detect(frames, tree, eta, zeta_t, top_t, verifier, alpha, params, timer,
                     graph_dump_dir)
    write_records(records, output_csv)
    return records


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def records_csv(records: Iterable[DetectionRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_HEADER)
    for r in records:
        w.writerow([r.query_id, _fmt(r.candidate_id), _fmt(r.bow_similarity),
                    _fmt(r.verify_score), int(r.accepted), r.verifier])
    return buf.getvalue()


def write_records(records: Iterable[DetectionRecord], path: str | os.PathLike) -> None:
    Path(path).write_text(records_csv(records), encoding="utf-8")


def read_records(path: str | os.PathLike) -> list[DetectionRecord]:
    path = str(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != RECORD_HEADER:
        raise ParseError(f"expected header {','.join(RECORD_HEADER)}", path, 1)
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(RECORD_HEADER):
            raise ParseError(f"expected {len(RECORD_HEADER)} fields, got {len(row)}", path, lineno)
        try:
            q = int(row[0])
            c = int(row[1]) if row[1] else None
            d = float(row[2]) if row[2] else None
            s = float(row[3]) if row[3] else None
            if row[4] not in ("0", "1"):
                raise ValueError(f"accepted must be 0 or 1, got {row[4]!r}")
            if row[5] not in VERIFIERS:
                raise ValueError(f"unknown verifier {row[5]!r}")
            out.append(DetectionRecord(q, c, d, s, row[4] == "1", row[5]))
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from exc
    return out


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class Evaluation:
    points: list[PrPoint]
    auc: float
    r_max_at_p1: float


class GroundTruth:
    """Loop pairs ``(query, match)`` with an optional match-id tolerance."""

    def __init__(self, pairs: Iterable[tuple[int, int]], window: int = 0):
        if window < 0:
            raise ValueError("window must be >= 0")
        self.window = window
        self.by_query: dict[int, set[int]] = defaultdict(set)
        for q, m in pairs:
            self.by_query[q].add(m)

    @property
    def queries(self) -> set[int]:
        return set(self.by_query)

    def contains(self, q: int, c: int) -> bool:
        ms = self.by_query.get(q)
        if not ms:
            return False
        if self.window == 0:
            return c in ms
        return any(abs(c - m) <= self.window for m in ms)


def confusion(records: Sequence[DetectionRecord], accepted: Sequence[bool],
              gt: GroundTruth) -> tuple[int, int, int]:
    """TP, FP and FN; a wrong accepted candidate for a loop query is FP and FN."""
    tp = fp = 0
    for r, ok in zip(records, accepted):
        if not ok:
            continue
        if gt.contains(r.query_id, r.candidate_id):
            tp += 1
        else:
            fp += 1
    return tp, fp, len(gt.queries) - tp


def pr_point(threshold: float, tp: int, fp: int, fn: int) -> PrPoint:
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return PrPoint(threshold, precision, recall, tp, fp, fn)


def accept_at(record: DetectionRecord, threshold: float, sweep: str) -> bool:
    """Acceptance of ``record`` had the swept threshold been ``threshold``."""
    if record.candidate_id is None or math.isinf(threshold):
        return False
    if sweep == "alpha":
        return record.accepted and record.bow_similarity >= threshold
    if record.verifier == "none" or record.verify_score is None:
        return record.accepted
    if record.verifier == "graph":
        return record.verify_score > threshold
    return record.verify_score >= threshold


def sweep_values(records: Sequence[DetectionRecord], sweep: str) -> list[float]:
    if sweep == "alpha":
        vals = {r.bow_similarity for r in records if r.bow_similarity is not None}
    else:
        vals = {r.verify_score for r in records if r.verify_score is not None}
    return sorted(vals) + [math.inf]


def evaluate_records(records: Sequence[DetectionRecord], gt: GroundTruth, sweep: str = "zeta",
                     thresholds: Sequence[float] | None = None) -> Evaluation:
    if sweep not in ("alpha", "zeta"):
        raise ValueError(f"sweep must be alpha or zeta, got {sweep!r}")
    if thresholds is None:
        thresholds = sweep_values(records, sweep)
    points = []
    for t in thresholds:
        acc = [accept_at(r, t, sweep) for r in records]
        points.append(pr_point(t, *confusion(records, acc, gt)))
    return Evaluation(points, auc(points), r_max_at_precision_one(points))


def auc(points: Sequence[PrPoint]) -> float:
    """Trapezoidal area under precision as a function of recall."""
    pts = sorted(points, key=lambda p: (p.recall, -p.precision))
    return math.fsum(
        (b.recall - a.recall) * (a.precision + b.precision) / 2.0 for a, b in zip(pts, pts[1:])
    )


def r_max_at_precision_one(points: Sequence[PrPoint]) -> float:
    return max((p.recall for p in points if p.precision == 1.0), default=0.0)


def pr_csv(points: Iterable[PrPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PR_HEADER)
    for p in points:
        w.writerow([repr(float(p.threshold)), repr(p.precision), repr(p.recall), p.tp, p.fp, p.fn])
    return buf.getvalue()


def evaluate(records_csv_path: str | os.PathLike, ground_truth_csv: str | os.PathLike,
             output_pr_csv: str | os.PathLike, sweep: str = "zeta",
             gt_window: int = 0) -> Evaluation:
    records = read_records(records_csv_path)
    gt = GroundTruth(read_ground_truth(ground_truth_csv), gt_window)
    result = evaluate_records(records, gt, sweep)
    Path(output_pr_csv).write_text(pr_csv(result.points), encoding="utf-8")
    return result
