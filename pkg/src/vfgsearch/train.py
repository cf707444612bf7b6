"""Joint training of the code and query encoders with a margin ranking
objective: pull each snippet toward its own description and push it away
from a randomly drawn in-batch negative."""

from __future__ import annotations

import csv
import logging
import os
import random
from dataclasses import dataclass, field, asdict

import torch

from .encoders import (
    EncodedGraph,
    EncoderConfig,
    GraphBatch,
    JointEncoder,
    cosine,
    initialize_parameters,
    save_checkpoint,
    vocab_hashes,
)
from .ir import parse_module
from .optimize import optimize
from .textpipe import Vocabulary, build_vocab, encode_sequence, split_identifier
from .vfg import build_vfg

log = logging.getLogger(__name__)


class BatchTooSmall(ValueError):
    pass


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    margin: float = 0.6
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    epochs: int = 200
    seed: int = 17
    iterations: int = 5
    max_query_len: int = 30
    embed_dim: int = 300
    hidden_dim: int = 512
    ir_vocab_size: int = 15000
    query_vocab_size: int = 10000
    checkpoint_every: int = 50
    bidirectional_messages: bool = True

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for in-batch negatives")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            ir_vocab_size=self.ir_vocab_size,
            query_vocab_size=self.query_vocab_size,
            embed_dim=self.embed_dim,
            hidden_dim=self.hidden_dim,
            iterations=self.iterations,
            max_query_len=self.max_query_len,
            bidirectional_messages=self.bidirectional_messages,
        )

    def to_json_dict(self) -> dict:
        return asdict(self)


def ranking_loss(code_vec, d_plus, d_minus, margin: float):
    """max(0, margin - cos(c, d+) + cos(c, d-)); bounded by margin + 2."""
    value = margin - cosine(code_vec, d_plus) + cosine(code_vec, d_minus)
    return torch.clamp(value, min=0.0)


def sample_negative(batch_size: int, index: int, rng: random.Random) -> int:
    """Uniform index over the other descriptions in the batch."""
    if batch_size < 2:
        raise BatchTooSmall("need at least 2 descriptions to sample a negative")
    j = rng.randrange(batch_size - 1)
    return j if j < index else j + 1


# ---------------------------------------------------------------------------
# corpus preparation


@dataclass
class PreparedPair:
    id: str
    graph: EncodedGraph
    query: tuple
    query_ids: list
    code_text: str
    code_line_count: int
    node_count: int
    diameter: int


@dataclass
class PreparedCorpus:
    pairs: list
    ir_vocab: Vocabulary
    query_vocab: Vocabulary
    config: TrainConfig
    skipped: list = field(default_factory=list)


def graph_for_pair(ir_text: str):
    module = parse_module(ir_text)
    if not module.functions:
        raise ValueError("IR contains no function definition")
    f = module.functions[0]
    g = build_vfg(f, module.function_names())
    og, _ = optimize(g, f)
    return og


def prepare_corpus(pairs, config: TrainConfig) -> PreparedCorpus:
    """Parse + build + optimize every snippet, then build both vocabularies
    and encode everything. Snippets whose IR cannot be processed are
    skipped with a logged reason."""
    from .vfg import graph_stats

    graphs = {}
    skipped = []
    for pair in pairs:
        try:
            graphs[pair.id] = graph_for_pair(pair.ir_text)
        except Exception as exc:  # noqa: BLE001 - per-snippet isolation
            skipped.append((pair.id, str(exc)))
            log.warning("skipping %s: %s", pair.id, exc)
    ir_tokens = []
    query_tokens = []
    for pair in pairs:
        if pair.id not in graphs:
            continue
        for node in graphs[pair.id].nodes:
            ir_tokens.extend(split_identifier(node.label))
        query_tokens.extend(pair.query)
    ir_vocab = build_vocab(ir_tokens, config.ir_vocab_size)
    query_vocab = build_vocab(query_tokens, config.query_vocab_size)
    prepared = []
    for pair in pairs:
        g = graphs.get(pair.id)
        if g is None:
            continue
        stats = graph_stats(g)
        prepared.append(
            PreparedPair(
                id=pair.id,
                graph=EncodedGraph.from_vfg(g, ir_vocab),
                query=tuple(pair.query),
                query_ids=encode_sequence(pair.query, query_vocab, config.max_query_len),
                code_text=pair.code_text,
                code_line_count=pair.code_line_count,
                node_count=stats["node_count"],
                diameter=stats["diameter"],
            )
        )
    return PreparedCorpus(prepared, ir_vocab, query_vocab, config, skipped)


# ---------------------------------------------------------------------------
# the training loop


def _batches(order, batch_size):
    for i in range(0, len(order) - batch_size + 1, batch_size):
        yield order[i : i + batch_size]


def train(
    corpus: PreparedCorpus,
    config: TrainConfig | None = None,
    out_dir=None,
    epochs: int | None = None,
    epoch_callback=None,
) -> tuple[JointEncoder, list]:
    """Run the training loop; returns the model and the per-epoch mean
    loss curve. `epoch_callback(epoch, model, mean_loss)` may return True
    to stop early. Deterministic for a fixed seed and thread count."""
    config = config or corpus.config
    if not corpus.pairs:
        raise ValueError("empty corpus")
    torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    model = JointEncoder(config.encoder_config())
    initialize_parameters(model, config.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    n_epochs = config.epochs if epochs is None else epochs
    curve = []
    hashes = vocab_hashes(corpus.ir_vocab, corpus.query_vocab)
    queries = torch.tensor([p.query_ids for p in corpus.pairs], dtype=torch.long)
    rng = random.Random(config.seed)
    for epoch in range(1, n_epochs + 1):
        # fresh shuffle and fresh negatives every epoch: an anchor must
        # eventually out-rank every other description, not one fixed draw
        order = list(range(len(corpus.pairs)))
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for batch_idx in _batches(order, config.batch_size):
            if len(batch_idx) < 2:
                continue
            graphs = [corpus.pairs[i].graph for i in batch_idx]
            batch = GraphBatch(graphs)
            code_vecs = model.code(batch)
            query_vecs = model.query(queries[batch_idx])
            loss = code_vecs.new_zeros(())
            for row, _ in enumerate(batch_idx):
                neg = sample_negative(len(batch_idx), row, rng)
                loss = loss + ranking_loss(
                    code_vecs[row], query_vecs[row], query_vecs[neg], config.margin
                )
            value = float(loss.detach())
            if not (value == value and abs(value) != float("inf")):
                raise NonFiniteLoss(f"epoch {epoch}: loss became {value}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += value
            n_batches += 1
        mean_loss = epoch_loss / max(n_batches, 1)
        curve.append((epoch, mean_loss))
        log.info("epoch %d: mean batch loss %.6f", epoch, mean_loss)
        if out_dir is not None and (
            epoch % config.checkpoint_every == 0 or epoch == n_epochs
        ):
            _write_outputs(out_dir, model, hashes, curve, epoch)
        if epoch_callback is not None and epoch_callback(epoch, model, mean_loss):
            if out_dir is not None:
                _write_outputs(out_dir, model, hashes, curve, epoch)
            break
    return model, curve


def _write_outputs(out_dir, model, hashes, curve, epoch):
    os.makedirs(out_dir, exist_ok=True)
    save_checkpoint(
        os.path.join(out_dir, "model.ckpt"), model, hashes, extra={"epoch": epoch}
    )
    tmp = os.path.join(out_dir, "loss_curve.csv.tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        writer.writerows(curve)
    os.replace(tmp, os.path.join(out_dir, "loss_curve.csv"))
