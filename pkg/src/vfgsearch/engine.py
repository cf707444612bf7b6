"""Offline index construction, exact top-k retrieval by cosine, and the
evaluation harness (mean reciprocal rank, SuccessRate@k, robustness
buckets)."""

from __future__ import annotations

import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from .encoders import (
    EmptyQuery,
    GraphBatch,
    JointEncoder,
    checkpoint_fingerprint,
    load_checkpoint,
)
from .textpipe import PAD, Vocabulary, encode_sequence, tokenize_text

log = logging.getLogger(__name__)


class EmptyQuerySet(ValueError):
    pass


MISS = math.inf

_INDEX_MAGIC = b"VFGIDX1\n"


@dataclass
class SearchIndex:
    ids: list
    vectors: np.ndarray                     # N x H, unit rows, float32
    metadata: dict = field(default_factory=dict)   # id -> {code_line_count, ...}
    checkpoint_hash: str = ""

    def __post_init__(self):
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError("id/vector count mismatch")
        if len(self.ids):
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError("index vectors must be unit length")

    def __len__(self) -> int:
        return len(self.ids)

    def save(self, path) -> None:
        header = {
            "ids": self.ids,
            "metadata": self.metadata,
            "checkpoint_hash": self.checkpoint_hash,
            "dim": int(self.vectors.shape[1]) if len(self.ids) else 0,
            "dtype": "float32",
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        tmp = f"{path}.tmp"
        with open(tmp, "wb") as fh:
            fh.write(_INDEX_MAGIC)
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.vectors, dtype=np.float32).tobytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "SearchIndex":
        with open(path, "rb") as fh:
            if fh.read(len(_INDEX_MAGIC)) != _INDEX_MAGIC:
                raise ValueError("not an index file")
            (hlen,) = struct.unpack("<Q", fh.read(8))
            header = json.loads(fh.read(hlen).decode("utf-8"))
            payload = fh.read()
        n = len(header["ids"])
        dim = header["dim"]
        vectors = np.frombuffer(payload, dtype=np.float32).reshape(n, dim) if n else (
            np.zeros((0, 0), dtype=np.float32)
        )
        return cls(
            ids=list(header["ids"]),
            vectors=vectors.copy(),
            metadata=dict(header["metadata"]),
            checkpoint_hash=header.get("checkpoint_hash", ""),
        )


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("zero vector cannot be normalized")
    return v / norm


def build_index(model: JointEncoder, prepared_pairs, checkpoint_hash: str = "") -> SearchIndex:
    """Embed every prepared snippet once. Snippets are encoded one by one
    in corpus order so the result is deterministic; failures are skipped
    and counted."""
    ids = []
    rows = []
    metadata = {}
    skipped = 0
    model.eval()
    with torch.no_grad():
        for pair in prepared_pairs:
            try:
                vec = model.code(GraphBatch([pair.graph]))[0]
                row = _unit(vec.detach().cpu().numpy().astype(np.float32))
            except Exception as exc:  # noqa: BLE001 - per-snippet isolation
                skipped += 1
                log.warning("index skip %s: %s", pair.id, exc)
                continue
            ids.append(pair.id)
            rows.append(row)
            metadata[pair.id] = {
                "code_line_count": pair.code_line_count,
                "vfg_node_count": pair.node_count,
                "vfg_diameter": pair.diameter,
                "code_text": pair.code_text,
            }
    if skipped:
        log.warning("index build skipped %d snippets", skipped)
    vectors = np.stack(rows) if rows else np.zeros((0, 0), dtype=np.float32)
    return SearchIndex(ids, vectors, metadata, checkpoint_hash)


# ---------------------------------------------------------------------------
# online search


class SearchEngine:
    """Query encoder + index; retrieval is an exact cosine scan."""

    def __init__(self, model: JointEncoder, query_vocab: Vocabulary, index: SearchIndex):
        self.model = model
        self.query_vocab = query_vocab
        self.index = index

    @classmethod
    def load(cls, checkpoint_path, vocab_path, index_path) -> "SearchEngine":
        model, header = load_checkpoint(checkpoint_path)
        vocab = Vocabulary.load(vocab_path)
        if header["vocab_hashes"].get("query") != vocab.content_hash():
            raise ValueError("query vocabulary does not match the checkpoint")
        index = SearchIndex.load(index_path)
        actual = checkpoint_fingerprint(checkpoint_path)
        if index.checkpoint_hash and index.checkpoint_hash != actual:
            raise ValueError("index was built from a different checkpoint")
        return cls(model, vocab, index)

    def embed_query(self, text: str) -> np.ndarray:
        tokens = tokenize_text(text)
        ids = encode_sequence(tokens, self.query_vocab, self.model.cfg.max_query_len)
        if all(i == PAD for i in ids):
            raise EmptyQuery("query is empty after tokenization")
        self.model.eval()
        with torch.no_grad():
            vec = self.model.query(torch.tensor([ids], dtype=torch.long))[0]
        return _unit(vec.detach().cpu().numpy().astype(np.float32))

    def search(self, query_text: str, k: int = 10) -> list[dict]:
        if k < 1:
            raise ValueError("k must be >= 1")
        qvec = self.embed_query(query_text)
        return search_vector(self.index, qvec, k)


def search_vector(index: SearchIndex, query_vec: np.ndarray, k: int) -> list[dict]:
    """Top-k by cosine, descending; ties break toward the smaller snippet
    id so repeated searches are stable."""
    if len(index) == 0:
        return []
    scores = index.vectors @ query_vec.astype(np.float32)
    order = sorted(range(len(index)), key=lambda i: (-float(scores[i]), index.ids[i]))
    out = []
    for rank, i in enumerate(order[:k], start=1):
        out.append({"id": index.ids[i], "score": float(scores[i]), "rank": rank})
    return out


# ---------------------------------------------------------------------------
# metrics


def success_rate_at_k(ranks, k: int) -> float:
    ranks = list(ranks)
    if not ranks:
        raise EmptyQuerySet("no queries")
    return sum(1 for r in ranks if r <= k) / len(ranks)


def mean_reciprocal_rank(ranks) -> float:
    ranks = list(ranks)
    if not ranks:
        raise EmptyQuerySet("no queries")
    return sum(0.0 if math.isinf(r) else 1.0 / r for r in ranks) / len(ranks)


# ---------------------------------------------------------------------------
# evaluation


DEFAULT_BUCKETS = {
    "comment_length": [5, 10, 15, 20, 25],
    "code_length": [10, 15, 20, 25],
    "node_count": [5, 10, 15, 20, 30],
    "diameter": [2, 4, 6, 8],
}


@dataclass
class EvalReport:
    mrr: float
    r1: float
    r5: float
    r10: float
    query_count: int
    miss_count: int
    buckets: dict = field(default_factory=dict)
    errors: int = 0

    def to_json_dict(self) -> dict:
        return {
            "mrr": self.mrr,
            "r1": self.r1,
            "r5": self.r5,
            "r10": self.r10,
            "query_count": self.query_count,
            "miss_count": self.miss_count,
            "errors": self.errors,
            "buckets": self.buckets,
        }


def _bucket_label(edges, value) -> str:
    lo = 0
    for edge in edges:
        if value < edge:
            return f"[{lo},{edge})"
        lo = edge
    return f"[{lo},inf)"


def evaluate(
    engine: SearchEngine,
    test_pairs,
    bucket_spec: dict | None = None,
) -> EvalReport:
    """Rank every test pair's own snippet inside the full index; aggregate
    and per-bucket metrics. Pairs whose snippet is missing from the index
    count as misses (reciprocal rank 0)."""
    bucket_spec = bucket_spec or DEFAULT_BUCKETS
    ranks = []
    errors = 0
    rows = []
    for pair in test_pairs:
        try:
            results = engine.search(" ".join(pair.query), k=len(engine.index))
        except EmptyQuery:
            errors += 1
            continue
        rank = MISS
        for r in results:
            if r["id"] == pair.id:
                rank = r["rank"]
                break
        ranks.append(rank)
        meta = engine.index.metadata.get(pair.id, {})
        rows.append(
            {
                "rank": rank,
                "comment_length": len(pair.query),
                "code_length": meta.get("code_line_count", pair.code_line_count),
                "node_count": meta.get("vfg_node_count", pair.node_count),
                "diameter": meta.get("vfg_diameter", pair.diameter),
            }
        )
    if not ranks:
        raise EmptyQuerySet("no evaluable queries")
    report = EvalReport(
        mrr=mean_reciprocal_rank(ranks),
        r1=success_rate_at_k(ranks, 1),
        r5=success_rate_at_k(ranks, 5),
        r10=success_rate_at_k(ranks, 10),
        query_count=len(ranks),
        miss_count=sum(1 for r in ranks if math.isinf(r)),
        errors=errors,
    )
    for dim, edges in bucket_spec.items():
        table = {}
        for row in rows:
            label = _bucket_label(edges, row[dim])
            table.setdefault(label, []).append(row["rank"])
        report.buckets[dim] = {
            label: {
                "count": len(rs),
                "mrr": mean_reciprocal_rank(rs),
                "r1": success_rate_at_k(rs, 1),
                "r5": success_rate_at_k(rs, 5),
                "r10": success_rate_at_k(rs, 10),
            }
            for label, rs in sorted(table.items())
        }
    return report


# ---------------------------------------------------------------------------
# labeled-session scoring (feeds on the UI's exported session files)


def evaluate_session(session: dict) -> dict:
    """Per-session SuccessRate@10 and MRR from human relevance labels.

    The session format is the UI export: {"session": str, "queries":
    [{"query": str, "results": [snippet ids in rank order], "labels":
    {snippet_id: bool}}]}. The rank of a query is the best rank among
    results labeled relevant."""
    ranks = []
    for entry in session.get("queries", []):
        labels = entry.get("labels", {})
        results = entry.get("results", [])
        best = MISS
        for pos, snippet_id in enumerate(results, start=1):
            if labels.get(str(snippet_id)):
                best = pos
                break
        ranks.append(best)
    if not ranks:
        raise EmptyQuerySet("session has no labeled queries")
    return {
        "session": session.get("session", ""),
        "query_count": len(ranks),
        "success_rate_at_10": success_rate_at_k(ranks, 10),
        "mrr": mean_reciprocal_rank(ranks),
    }
