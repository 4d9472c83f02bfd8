import numpy as np
import pytest

from graphlcd.errors import SequenceError
from graphlcd.retrieval import FrameDatabase, add_frame, query_candidate
from graphlcd.vocabulary import BowVector, similarity
from scenes import scan_best


def bow(*words):
    return BowVector.from_words(list(words))


def test_first_frame_postings():
    db = FrameDatabase()
    add_frame(db, 0, bow(3, 3, 5))
    assert db.inverted_index == {3: [(0, 2)], 5: [(0, 1)]}


def test_shared_word_postings_sorted():
    db = FrameDatabase()
    db.add_frame(0, bow(1, 2))
    db.add_frame(1, bow(2))
    assert [fid for fid, _ in db.inverted_index[2]] == [0, 1]


def test_sequence_errors():
    db = FrameDatabase()
    db.add_frame(0, bow(1))
    with pytest.raises(SequenceError):
        db.add_frame(0, bow(1))
    with pytest.raises(SequenceError):
        db.add_frame(5, bow(1))


def test_eta_window():
    eta = 10
    db = FrameDatabase()
    for i in range(eta + 2):
        db.add_frame(i, bow(1, 2, i + 10))
    assert query_candidate(db, bow(1, 2), eta, eta) is None
    cand = query_candidate(db, bow(1, 2, 10), eta + 1, eta)
    assert cand.candidate_id == 0 and cand.bow_similarity == 1.0


def test_nothing_shared():
    db = FrameDatabase()
    db.add_frame(0, bow(1))
    assert db.query_candidate(bow(2), 50, eta=0) is None
    assert db.query_candidate(BowVector.from_words([]), 50, eta=0) is None


def test_ties_go_to_smaller_id():
    db = FrameDatabase()
    for i in range(3):
        db.add_frame(i, bow(7, 8))
    assert db.query_candidate(bow(7, 8), 10, eta=2).candidate_id == 0


def test_alpha_gate():
    db = FrameDatabase()
    db.add_frame(0, bow(1, 2, 3, 4))
    q = bow(1, 9, 10, 11)
    d = similarity(q, db.entries[0][0])
    assert db.query_candidate(q, 5, eta=0, alpha=d).bow_similarity == d
    assert db.query_candidate(q, 5, eta=0, alpha=d + 1e-9) is None


def test_planted_duplicate_against_scan(rng):
    bows = [BowVector.from_words(rng.integers(0, 200, 40)) for _ in range(50)]
    bows.insert(17, bows[-1])
    db = FrameDatabase()
    for i, v in enumerate(bows):
        db.add_frame(i, v)
    q = bows[17]
    cand = db.query_candidate(q, 200, eta=100)
    assert cand.candidate_id == scan_best(bows, q, 200, 100, 200)[0]
    assert cand.candidate_id == 17 and cand.bow_similarity == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_index_equals_scan(seed):
    rng = np.random.default_rng(seed)
    vocab = int(rng.integers(3, 30))
    n = int(rng.integers(1, 80))
    bows = [BowVector.from_words(rng.integers(0, vocab, rng.integers(1, 12))) for _ in range(n)]
    db = FrameDatabase()
    for i, v in enumerate(bows):
        db.add_frame(i, v)
    eta = int(rng.integers(0, 10))
    for q in range(n):
        query = BowVector.from_words(rng.integers(0, vocab, rng.integers(1, 12)))
        got = db.query_candidate(query, q, eta)
        want = scan_best(bows, query, q, eta, vocab)
        if want is None:
            assert got is None
            continue
        assert got.candidate_id == want[0]
        assert got.bow_similarity == pytest.approx(want[1], abs=1e-12)
        assert got.candidate_id < q - eta


def test_scores_unchanged_by_growth(rng):
    db = FrameDatabase()
    bows = [BowVector.from_words(rng.integers(0, 20, 15)) for _ in range(30)]
    for i, v in enumerate(bows[:10]):
        db.add_frame(i, v)
    before = db.scores(bows[-1], 9)
    for i, v in enumerate(bows[10:], start=10):
        db.add_frame(i, v)
    assert db.scores(bows[-1], 9) == before
    assert all(before[f] == similarity(bows[-1], bows[f]) for f in before)
