import math

import numpy as np
import pytest
import torch

from vfgsearch.encoders import JointEncoder, initialize_parameters
from vfgsearch.engine import (
    DEFAULT_BUCKETS,
    EmptyQuerySet,
    MISS,
    SearchEngine,
    SearchIndex,
    build_index,
    evaluate,
    evaluate_session,
    mean_reciprocal_rank,
    search_vector,
    success_rate_at_k,
)
from vfgsearch.textpipe import load_corpus
from vfgsearch.train import TrainConfig, prepare_corpus

from conftest import FIXTURES


def unit_rows(arr):
    arr = np.asarray(arr, dtype=np.float32)
    return arr / np.linalg.norm(arr, axis=1, keepdims=True)


def make_index(vectors, ids=None, metadata=None):
    vectors = unit_rows(vectors)
    ids = ids or [f"s{i}" for i in range(vectors.shape[0])]
    return SearchIndex(ids, vectors, metadata or {})


# ---------------------------------------------------------------------------
# index invariants and persistence


def test_index_requires_unit_vectors():
    with pytest.raises(ValueError):
        SearchIndex(["a"], np.array([[2.0, 0.0]], dtype=np.float32))


def test_index_requires_matching_counts():
    with pytest.raises(ValueError):
        SearchIndex(["a", "b"], unit_rows([[1.0, 0.0]]))


def test_index_save_load_round_trip(tmp_path):
    idx = make_index([[1, 0, 0], [0.5, 0.5, 0]], metadata={"s0": {"code_text": "x"}})
    path = tmp_path / "index.bin"
    idx.save(path)
    loaded = SearchIndex.load(path)
    assert loaded.ids == idx.ids
    assert np.abs(loaded.vectors - idx.vectors).max() < 1e-6
    assert loaded.metadata == idx.metadata


def test_index_save_is_deterministic(tmp_path):
    idx = make_index([[1, 0], [0, 1]])
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    idx.save(a)
    idx.save(b)
    assert a.read_bytes() == b.read_bytes()


def test_empty_index_is_searchable(tmp_path):
    idx = SearchIndex([], np.zeros((0, 0), dtype=np.float32))
    assert search_vector(idx, np.array([1.0, 0.0], dtype=np.float32), 5) == []
    path = tmp_path / "empty.bin"
    idx.save(path)
    assert len(SearchIndex.load(path)) == 0


# ---------------------------------------------------------------------------
# search behavior


def test_exact_match_ranks_first():
    idx = make_index([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    q = np.array([0, 1, 0], dtype=np.float32)
    hits = search_vector(idx, q, 2)
    assert hits[0]["id"] == "s1"
    assert hits[0]["score"] == pytest.approx(1.0, abs=1e-6)
    assert hits[0]["rank"] == 1


def test_k_larger_than_index_returns_all_ranked():
    idx = make_index([[1, 0], [0, 1], [1, 1]])
    hits = search_vector(idx, np.array([1, 0], dtype=np.float32), 100)
    assert [h["rank"] for h in hits] == [1, 2, 3]
    assert len(hits) == 3


def test_tie_break_ascending_id_and_stability():
    idx = make_index([[1, 0], [1, 0], [1, 0]], ids=["b", "a", "c"])
    q = np.array([1, 0], dtype=np.float32)
    first = search_vector(idx, q, 3)
    assert [h["id"] for h in first] == ["a", "b", "c"]
    for _ in range(5):
        assert search_vector(idx, q, 3) == first


def brute_force(idx, q, k):
    scored = []
    for i, sid in enumerate(idx.ids):
        scored.append((-float(np.dot(idx.vectors[i], q)), sid))
    scored.sort()
    return [sid for _, sid in scored[:k]]


def test_search_matches_brute_force_scan():
    rng = np.random.default_rng(42)
    vectors = rng.normal(size=(200, 16)).astype(np.float32)
    idx = make_index(vectors)
    for trial in range(20):
        q = rng.normal(size=16).astype(np.float32)
        q /= np.linalg.norm(q)
        for k in (1, 3, 50, 200):
            got = [h["id"] for h in search_vector(idx, q, k)]
            assert got == brute_force(idx, q, k), (trial, k)


# ---------------------------------------------------------------------------
# metrics


def test_mrr_hand_computed():
    assert mean_reciprocal_rank([1, 2, 4]) == pytest.approx((1 + 0.5 + 0.25) / 3)


def test_mrr_all_first():
    assert mean_reciprocal_rank([1, 1, 1]) == 1.0


def test_mrr_single_rank_ten():
    assert mean_reciprocal_rank([10]) == pytest.approx(0.1)


def test_mrr_miss_contributes_zero():
    assert mean_reciprocal_rank([1, MISS]) == pytest.approx(0.5)


def test_success_rate_hand_computed():
    assert success_rate_at_k([1, 2, 4], 5) == 1.0
    assert success_rate_at_k([1, 2, 4], 1) == pytest.approx(1 / 3)
    assert success_rate_at_k([MISS, MISS], 10) == 0.0


def test_success_rate_monotone_in_k():
    ranks = [1, 3, 7, 12, MISS]
    values = [success_rate_at_k(ranks, k) for k in range(1, 15)]
    assert values == sorted(values)


def test_mrr_permutation_invariant():
    import random as pyrandom

    ranks = [1, 5, 2, MISS, 3]
    base = mean_reciprocal_rank(ranks)
    for seed in range(5):
        shuffled = ranks[:]
        pyrandom.Random(seed).shuffle(shuffled)
        assert mean_reciprocal_rank(shuffled) == pytest.approx(base)


def test_metrics_reject_empty():
    with pytest.raises(EmptyQuerySet):
        mean_reciprocal_rank([])
    with pytest.raises(EmptyQuerySet):
        success_rate_at_k([], 5)


# ---------------------------------------------------------------------------
# evaluate


class StubEngine:
    """Maps query text straight to a vector; used to pin retrieval geometry."""

    def __init__(self, index, mapping):
        self.index = index
        self.mapping = mapping

    def search(self, text, k):
        return search_vector(self.index, self.mapping[text], k)


def _pair(pid, tokens, lines=8, nodes=7, diameter=3):
    from vfgsearch.train import PreparedPair

    return PreparedPair(
        id=pid,
        graph=None,
        query=tuple(tokens),
        query_ids=[],
        code_text="code",
        code_line_count=lines,
        node_count=nodes,
        diameter=diameter,
    )


def test_evaluate_orthogonal_embeddings_perfect():
    idx = make_index(
        [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        ids=["a", "b", "c"],
        metadata={i: {"code_line_count": 6, "vfg_node_count": 7, "vfg_diameter": 2, "code_text": ""} for i in "abc"},
    )
    mapping = {
        "first one": np.array([1, 0, 0], dtype=np.float32),
        "second one": np.array([0, 1, 0], dtype=np.float32),
        "third one": np.array([0, 0, 1], dtype=np.float32),
    }
    engine = StubEngine(idx, mapping)
    pairs = [
        _pair("a", ("first", "one")),
        _pair("b", ("second", "one")),
        _pair("c", ("third", "one")),
    ]
    report = evaluate(engine, pairs)
    assert report.mrr == 1.0
    assert report.r1 == 1.0
    assert report.miss_count == 0


def test_evaluate_buckets_partition_queries():
    idx = make_index([[1, 0], [0, 1]], ids=["a", "b"])
    mapping = {
        "alpha query": np.array([1, 0], dtype=np.float32),
        "beta query words": np.array([0, 1], dtype=np.float32),
    }
    engine = StubEngine(idx, mapping)
    pa = _pair("a", ("alpha", "query"), nodes=3)
    pb = _pair("b", ("beta", "query", "words"), nodes=15)
    report = evaluate(engine, [pa, pb], {"node_count": [10]})
    counts = [b["count"] for b in report.buckets["node_count"].values()]
    assert sum(counts) == 2
    assert set(report.buckets["node_count"]) == {"[0,10)", "[10,inf)"}


def test_evaluate_missing_ground_truth_is_a_miss():
    idx = make_index([[1, 0]], ids=["present"])
    mapping = {"some query": np.array([1, 0], dtype=np.float32)}
    engine = StubEngine(idx, mapping)
    p = _pair("absent", ("some", "query"))
    report = evaluate(engine, [p], {})
    assert report.miss_count == 1
    assert report.mrr == 0.0


# ---------------------------------------------------------------------------
# evaluate on a real (untrained) engine over the tiny corpus


@pytest.fixture(scope="module")
def tiny_engine():
    pairs = load_corpus(FIXTURES / "tiny_corpus.jsonl")[:12]
    cfg = TrainConfig(
        batch_size=4, epochs=1, seed=5, iterations=2, embed_dim=16, hidden_dim=16,
        ir_vocab_size=300, query_vocab_size=300, max_query_len=10,
    )
    corpus = prepare_corpus(pairs, cfg)
    torch.manual_seed(cfg.seed)
    model = JointEncoder(cfg.encoder_config())
    initialize_parameters(model, cfg.seed)
    index = build_index(model, corpus.pairs, checkpoint_hash="t")
    return SearchEngine(model, corpus.query_vocab, index), corpus


def test_build_index_unit_vectors(tiny_engine):
    engine, corpus = tiny_engine
    assert len(engine.index) == len(corpus.pairs)
    norms = np.linalg.norm(engine.index.vectors, axis=1)
    assert np.abs(norms - 1.0).max() < 1e-6


def test_build_index_deterministic(tiny_engine, tmp_path):
    engine, corpus = tiny_engine
    again = build_index(engine.model, corpus.pairs, checkpoint_hash="t")
    p1, p2 = tmp_path / "i1.bin", tmp_path / "i2.bin"
    engine.index.save(p1)
    again.save(p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_engine_search_shape(tiny_engine):
    engine, corpus = tiny_engine
    hits = engine.search("sum of all values in an array", k=5)
    assert len(hits) == 5
    assert [h["rank"] for h in hits] == [1, 2, 3, 4, 5]
    scores = [h["score"] for h in hits]
    assert scores == sorted(scores, reverse=True)


def test_engine_rejects_empty_query(tiny_engine):
    from vfgsearch.encoders import EmptyQuery

    engine, _ = tiny_engine
    with pytest.raises(EmptyQuery):
        engine.search("   ", k=3)


def test_evaluate_real_engine_runs(tiny_engine):
    engine, corpus = tiny_engine
    report = evaluate(engine, corpus.pairs, DEFAULT_BUCKETS)
    assert report.query_count == len(corpus.pairs)
    assert 0.0 < report.mrr <= 1.0
    assert report.r1 <= report.r5 <= report.r10 <= 1.0


# ---------------------------------------------------------------------------
# session scoring


def test_evaluate_session_hand_computed():
    session = {
        "session": "p1",
        "queries": [
            {"query": "q1", "results": ["a", "b", "c"], "labels": {"b": True}},
            {"query": "q2", "results": ["d", "e"], "labels": {"d": True, "e": True}},
            {"query": "q3", "results": ["f", "g"], "labels": {}},
        ],
    }
    report = evaluate_session(session)
    assert report["query_count"] == 3
    assert report["success_rate_at_10"] == pytest.approx(2 / 3)
    assert report["mrr"] == pytest.approx((0.5 + 1.0 + 0.0) / 3)


def test_evaluate_session_empty_rejected():
    with pytest.raises(EmptyQuerySet):
        evaluate_session({"session": "x", "queries": []})
