import math

import numpy as np
import pytest

from graphlcd.errors import DimensionError, InsufficientSequenceError, ParseError, ZeroDriftWarning
from graphlcd.features import FrameFeatures, apply_scaler, save_sequence
from graphlcd.pipeline import (
    DetectionRecord,
    GroundTruth,
    PrPoint,
    StageTimer,
    auc,
    confusion,
    detect,
    evaluate,
    evaluate_records,
    pr_point,
    r_max_at_precision_one,
    read_records,
    records_csv,
    run_detect,
    run_train,
    train_vocabulary,
    write_records,
)
from graphlcd.synth import SynthConfig, synth_generate_sequence, write_ground_truth
from graphlcd.vocabulary import load_vocabulary

ETA = 10
CFG = SynthConfig(places=6, frames_per_place=5, revisits=(0,), aliased_frames=2,
                  features_per_frame=80, eta=ETA)


@pytest.fixture(scope="module")
def trained():
    seq = synth_generate_sequence(CFG, 0)
    tree, summary = train_vocabulary(seq.frames, k=10, seed=0)
    return seq, tree, summary


def rec(q, c, d, s, acc, verifier="graph"):
    return DetectionRecord(q, c, d, s, acc, verifier)


# --- training -----------------------------------------------------------------


def test_identical_frames_zero_drift(rng):
    f = FrameFeatures(0, rng.uniform(0, 640, (10, 2)), np.linspace(1, 0, 10),
                      rng.standard_normal((10, 8)))
    g = FrameFeatures(1, f.keypoints, f.scores, f.descriptors)
    with pytest.warns(ZeroDriftWarning):
        tree, summary = train_vocabulary([f, g])
    assert summary.groups == 10 and summary.gamma_bar == 0.0
    assert summary.tracked_pairs == 1
    assert set(summary.stop_reasons) <= {"min_count", "max_depth", "root"}


def test_training_needs_two_frames(tmp_path, rng):
    with pytest.raises(InsufficientSequenceError):
        run_train(tmp_path, tmp_path / "v.lcdv")
    with pytest.raises(InsufficientSequenceError):
        train_vocabulary([FrameFeatures(0, [[0, 0]], [1], [[1.0]])])


def test_trained_vocabulary_quantizes_training_data(trained, tmp_path):
    seq, tree, summary = trained
    assert summary.frames == len(seq.frames)
    assert summary.word_count == tree.word_count > 1
    assert summary.gamma_bar > 0
    text = summary.format()
    assert "words: " in text and "mean drift: " in text and "stop reasons: " in text
    words = np.concatenate([tree.quantize_many(apply_scaler(tree.scaler, f).descriptors)
                            for f in seq.frames])
    assert words.min() >= 0 and words.max() < tree.word_count


def test_run_train_writes_loadable_vocabulary(tmp_path):
    cfg = SynthConfig(places=2, frames_per_place=3, features_per_frame=40)
    save_sequence(synth_generate_sequence(cfg, 1).frames, tmp_path / "f")
    summary = run_train(tmp_path / "f", tmp_path / "v.lcdv", k=4, seed=2)
    tree = load_vocabulary(tmp_path / "v.lcdv")
    assert tree.word_count == summary.word_count and tree.k == 4 and tree.train_seed == 2


# --- detection -----------------------------------------------------------------


def test_short_sequence_has_no_candidates(trained):
    seq, tree, _ = trained
    records = detect(seq.frames[:ETA], tree, eta=ETA)
    assert all(r.candidate_id is None and not r.accepted for r in records)


def test_exact_revisit_accepted(trained):
    seq, tree, _ = trained
    first = seq.frames[0]
    frames = seq.frames[: ETA + 5] + [FrameFeatures(ETA + 5, first.keypoints, first.scores,
                                                    first.descriptors)]
    last = detect(frames, tree, eta=ETA)[-1]
    assert last.candidate_id == 0
    assert last.bow_similarity == 1.0 and last.verify_score == 1.0 and last.accepted


def test_verifier_differential(trained):
    seq, tree, _ = trained
    graph = detect(seq.frames, tree, eta=ETA, verifier="graph")
    none = detect(seq.frames, tree, eta=ETA, verifier="none")
    ransac = detect(seq.frames, tree, eta=ETA, verifier="ransac12")
    for g, n, r in zip(graph, none, ransac):
        assert (g.candidate_id, g.bow_similarity) == (n.candidate_id, n.bow_similarity)
        assert (g.candidate_id, g.bow_similarity) == (r.candidate_id, r.bow_similarity)
        if g.candidate_id is not None:
            assert n.accepted
            assert g.accepted == (g.verify_score > 0.55)
    gt = GroundTruth(seq.ground_truth)
    tp, fp, _ = confusion(graph, [r.accepted for r in graph], gt)
    assert fp == 0 and tp > 0
    tp_none, fp_none, _ = confusion(none, [r.accepted for r in none], gt)
    assert fp_none > 0


def test_alias_candidates_rejected_by_graph(trained):
    seq, tree, _ = trained
    records = detect(seq.frames, tree, eta=ETA)
    for alias in seq.alias_sources:
        r = records[alias]
        if r.candidate_id is not None:
            assert not r.accepted


def test_dimension_mismatch(trained):
    _, tree, _ = trained
    with pytest.raises(DimensionError):
        detect([FrameFeatures(0, [[0, 0]], [1.0], [[1.0, 2.0]])], tree)
    with pytest.raises(ValueError):
        detect([], tree, verifier="bogus")


def test_timer_and_graph_dump(trained, tmp_path):
    seq, tree, _ = trained
    timer = StageTimer()
    records = detect(seq.frames, tree, eta=ETA, timer=timer, graph_dump_dir=tmp_path / "g")
    assert set(timer.mean_ms()) == {"scale", "bow", "query", "insert", "verify"}
    dumps = sorted((tmp_path / "g").iterdir())
    assert len(dumps) == sum(r.candidate_id is not None for r in records)
    assert dumps[0].read_text().startswith("zeta ")


def test_run_detect_writes_csv(trained, tmp_path):
    seq, tree, _ = trained
    from graphlcd.vocabulary import save_vocabulary

    save_sequence(seq.frames, tmp_path / "f")
    save_vocabulary(tree, tmp_path / "v.lcdv")
    records = run_detect(tmp_path / "f", tmp_path / "v.lcdv", tmp_path / "r.csv", eta=ETA)
    assert read_records(tmp_path / "r.csv") == records
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == \
        "query_id,candidate_id,bow_sim,verify_score,accepted,verifier"


# --- records I/O ----------------------------------------------------------------


def test_records_roundtrip(tmp_path):
    records = [rec(0, None, None, None, False), rec(5, 1, 0.25, 0.1 + 0.2, True),
               rec(6, 2, 1.0, 14.0, False, "ransac12")]
    write_records(records, tmp_path / "r.csv")
    assert read_records(tmp_path / "r.csv") == records
    assert records_csv(records).splitlines()[1] == "0,,,,0,graph"


@pytest.mark.parametrize("body,line", [
    ("query_id,candidate_id,bow_sim,verify_score,accepted,verifier\n0,1,0.5,0.5,2,graph\n", 2),
    ("query_id,candidate_id,bow_sim,verify_score,accepted,verifier\n0,,,,0,graph\nx,,,,0,none\n", 3),
    ("query_id,candidate_id,bow_sim,verify_score,accepted,verifier\n0,1,0.5\n", 2),
    ("id,cand\n", 1),
    ("query_id,candidate_id,bow_sim,verify_score,accepted,verifier\n0,,,,1,graph\n", 2),
])
def test_malformed_records(tmp_path, body, line):
    path = tmp_path / "r.csv"
    path.write_text(body)
    with pytest.raises(ParseError) as exc:
        read_records(path)
    assert exc.value.line == line


def test_record_invariant():
    with pytest.raises(ValueError):
        DetectionRecord(0, None, None, None, True, "graph")


# --- evaluation -----------------------------------------------------------------


def test_pr_hand_values():
    assert pr_point(0.5, 3, 1, 2) == PrPoint(0.5, 0.75, 0.6, 3, 1, 2)
    empty = pr_point(0.5, 0, 0, 4)
    assert (empty.precision, empty.recall) == (1.0, 0.0)


def test_perfect_detector():
    gt = GroundTruth([(20, 1), (21, 2)])
    records = [rec(20, 1, 0.9, 0.9, True), rec(21, 2, 0.8, 0.8, True), rec(22, 3, 0.7, 0.1, False)]
    result = evaluate_records(records, gt, "zeta", thresholds=[0.55])
    assert (result.points[0].precision, result.points[0].recall) == (1.0, 1.0)
    assert result.r_max_at_p1 == 1.0


def test_zero_accepted():
    gt = GroundTruth([(20, 1)])
    result = evaluate_records([rec(20, 1, 0.9, 0.1, False)], gt, "zeta", thresholds=[0.55])
    p = result.points[0]
    assert (p.precision, p.recall, result.r_max_at_p1) == (1.0, 0.0, 0.0)


def test_wrong_candidate_is_fp_and_fn():
    gt = GroundTruth([(20, 1)])
    assert confusion([rec(20, 7, 0.9, 0.9, True)], [True], gt) == (0, 1, 1)


def test_gt_window():
    gt = GroundTruth([(20, 5)], window=2)
    assert gt.contains(20, 7) and not gt.contains(20, 8) and not gt.contains(21, 5)
    with pytest.raises(ValueError):
        GroundTruth([], window=-1)


def test_sweep_monotone_and_auc():
    rng = np.random.default_rng(3)
    gt = GroundTruth([(q, q - 15) for q in range(15, 40)])
    records = []
    for q in range(15, 40):
        good = rng.random() < 0.6
        c = q - 15 if good else 0
        z = float(rng.uniform(0.5, 1.0) if good else rng.uniform(0.0, 0.7))
        records.append(rec(q, c, 0.5, z, z > 0.55))
    result = evaluate_records(records, gt, "zeta")
    accepted = [p.tp + p.fp for p in result.points]
    assert accepted == sorted(accepted, reverse=True)
    assert math.isinf(result.points[-1].threshold) and accepted[-1] == 0
    assert 0.0 <= result.auc <= 1.0
    assert result.r_max_at_p1 == r_max_at_precision_one(result.points)


def test_auc_trapezoid():
    pts = [PrPoint(0, 0.5, 1.0, 0, 0, 0), PrPoint(1, 1.0, 0.5, 0, 0, 0),
           PrPoint(2, 1.0, 0.0, 0, 0, 0)]
    assert auc(pts) == pytest.approx(0.5 * 1.0 + 0.5 * 0.75)


def test_alpha_sweep_uses_bow_similarity():
    gt = GroundTruth([(20, 1)])
    records = [rec(20, 1, 0.9, 0.9, True), rec(21, 3, 0.4, 0.9, True)]
    result = evaluate_records(records, gt, "alpha", thresholds=[0.5])
    assert (result.points[0].tp, result.points[0].fp) == (1, 0)
    with pytest.raises(ValueError):
        evaluate_records(records, gt, "beta")


def test_evaluate_files(tmp_path):
    write_records([rec(20, 1, 0.9, 0.9, True), rec(21, 3, 0.5, 0.2, False)], tmp_path / "r.csv")
    write_ground_truth([(20, 1), (21, 2)], tmp_path / "gt.csv")
    result = evaluate(tmp_path / "r.csv", tmp_path / "gt.csv", tmp_path / "pr.csv")
    lines = (tmp_path / "pr.csv").read_text().splitlines()
    assert lines[0] == "threshold,precision,recall,tp,fp,fn"
    assert len(lines) == 1 + len(result.points)
    assert result.r_max_at_p1 == 0.5
