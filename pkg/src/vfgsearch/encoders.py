"""Neural encoders mapping flow graphs and natural-language queries into a
shared vector space.

The code side runs gated message passing over the graph: each round, every
node receives the sum of its neighbours' states through one weight matrix
per (edge type, direction), then updates through a GRU cell. A sigmoid
gate per node (unnormalized on purpose: weights are independent scores,
not a distribution) weights the final states into one graph vector. The
query side runs an LSTM with a softmax attention readout.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .textpipe import PAD, UNK, Vocabulary, split_identifier
from .vfg import EdgeKind, Vfg


class ZeroVector(ValueError):
    pass


class EmptyQuery(ValueError):
    pass


@dataclass
class EncoderConfig:
    ir_vocab_size: int
    query_vocab_size: int
    embed_dim: int = 300
    hidden_dim: int = 512
    iterations: int = 5
    max_query_len: int = 30
    bidirectional_messages: bool = True

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, data: dict) -> "EncoderConfig":
        return cls(**data)


def cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of two vectors; rejects zero-norm inputs."""
    na = torch.linalg.vector_norm(a)
    nb = torch.linalg.vector_norm(b)
    if float(na.detach()) == 0.0 or float(nb.detach()) == 0.0:
        raise ZeroVector("cosine of zero vector")
    return (a * b).sum() / (na * nb)


# ---------------------------------------------------------------------------
# graph featurization and batching


def node_token_ids(g: Vfg, vocab: Vocabulary) -> list[list[int]]:
    """Per-node subtoken ids; labels with no usable subtokens become UNK."""
    out = []
    for node in g.nodes:
        subs = split_identifier(node.label)
        ids = [vocab.id(s) for s in subs] if subs else [UNK]
        out.append(ids)
    return out


@dataclass
class EncodedGraph:
    token_ids: list
    data_edges: list
    control_edges: list

    @classmethod
    def from_vfg(cls, g: Vfg, vocab: Vocabulary) -> "EncodedGraph":
        return cls(
            token_ids=node_token_ids(g, vocab),
            data_edges=[(e.src, e.dst) for e in g.edges if e.kind is EdgeKind.Data],
            control_edges=[
                (e.src, e.dst) for e in g.edges if e.kind is EdgeKind.Control
            ],
        )


class GraphBatch:
    """Several graphs packed into one node table with per-type edge lists
    and a node->graph membership vector."""

    def __init__(self, graphs: list[EncodedGraph], dtype=torch.float32):
        if not graphs:
            raise ValueError("empty batch")
        self.num_graphs = len(graphs)
        self.dtype = dtype
        tokens: list[list[int]] = []
        membership: list[int] = []
        data_edges: list[tuple[int, int]] = []
        control_edges: list[tuple[int, int]] = []
        offset = 0
        for gi, g in enumerate(graphs):
            n = len(g.token_ids)
            if n == 0:
                raise ValueError("graph with no nodes")
            tokens.extend(g.token_ids)
            membership.extend([gi] * n)
            for s, d in g.data_edges:
                if not (0 <= s < n and 0 <= d < n):
                    raise ValueError("edge endpoint out of range")
                data_edges.append((s + offset, d + offset))
            for s, d in g.control_edges:
                if not (0 <= s < n and 0 <= d < n):
                    raise ValueError("edge endpoint out of range")
                control_edges.append((s + offset, d + offset))
            offset += n
        width = max(len(t) for t in tokens)
        padded = [t + [PAD] * (width - len(t)) for t in tokens]
        counts = [len(t) for t in tokens]
        self.node_tokens = torch.tensor(padded, dtype=torch.long)
        self.token_counts = torch.tensor(counts, dtype=torch.long)
        self.membership = torch.tensor(membership, dtype=torch.long)
        self.num_nodes = offset

        def pair_tensor(pairs):
            if pairs:
                t = torch.tensor(pairs, dtype=torch.long)
                return t[:, 0], t[:, 1]
            empty = torch.zeros(0, dtype=torch.long)
            return empty, empty

        self.data_src, self.data_dst = pair_tensor(data_edges)
        self.control_src, self.control_dst = pair_tensor(control_edges)


# ---------------------------------------------------------------------------
# code encoder


class CodeEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.embedding = nn.Embedding(cfg.ir_vocab_size, cfg.embed_dim, padding_idx=PAD)
        self.input_proj = nn.Linear(cfg.embed_dim, cfg.hidden_dim, bias=False)
        h = cfg.hidden_dim
        self.msg_data = nn.Linear(h, h, bias=False)
        self.msg_control = nn.Linear(h, h, bias=False)
        self.msg_data_rev = nn.Linear(h, h, bias=False)
        self.msg_control_rev = nn.Linear(h, h, bias=False)
        self.gru = nn.GRUCell(h, h)
        self.att_proj = nn.Linear(h, h)
        self.att_context = nn.Parameter(torch.zeros(h))

    def init_node_states(self, batch: GraphBatch) -> torch.Tensor:
        emb = self.embedding(batch.node_tokens)            # N x S x E
        mask = (batch.node_tokens != PAD).unsqueeze(-1).to(emb.dtype)
        # PAD rows embed to zero but still guard the count divisor
        summed = (emb * mask).sum(dim=1)
        counts = batch.token_counts.clamp(min=1).unsqueeze(-1).to(emb.dtype)
        return self.input_proj(summed / counts)

    def propagate(self, batch: GraphBatch, h: torch.Tensor, iterations: int) -> torch.Tensor:
        for _ in range(iterations):
            m = torch.zeros_like(h)
            if batch.data_src.numel():
                msgs = self.msg_data(h)
                m = m.index_add(0, batch.data_dst, msgs[batch.data_src])
            if batch.control_src.numel():
                msgs = self.msg_control(h)
                m = m.index_add(0, batch.control_dst, msgs[batch.control_src])
            if self.cfg.bidirectional_messages:
                if batch.data_src.numel():
                    msgs = self.msg_data_rev(h)
                    m = m.index_add(0, batch.data_src, msgs[batch.data_dst])
                if batch.control_src.numel():
                    msgs = self.msg_control_rev(h)
                    m = m.index_add(0, batch.control_src, msgs[batch.control_dst])
            h = self.gru(m, h)
        return h

    def pool(self, batch: GraphBatch, h: torch.Tensor) -> torch.Tensor:
        scores = (self.att_proj(h) * self.att_context).sum(dim=-1)
        alpha = torch.sigmoid(scores)
        weighted = alpha.unsqueeze(-1) * h
        out = torch.zeros(
            batch.num_graphs, h.shape[-1], dtype=h.dtype, device=h.device
        )
        return out.index_add(0, batch.membership, weighted)

    def forward(
        self, batch: GraphBatch, iterations: int | None = None,
        return_states: bool = False,
    ):
        T = self.cfg.iterations if iterations is None else iterations
        if T < 0:
            raise ValueError("iterations must be >= 0")
        h = self.init_node_states(batch)
        h = self.propagate(batch, h, T)
        pooled = self.pool(batch, h)
        if return_states:
            return pooled, h
        return pooled

    def attention_weights(self, batch: GraphBatch, iterations: int | None = None):
        T = self.cfg.iterations if iterations is None else iterations
        h = self.propagate(batch, self.init_node_states(batch), T)
        return torch.sigmoid((self.att_proj(h) * self.att_context).sum(dim=-1))


# ---------------------------------------------------------------------------
# query encoder


class QueryEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.embedding = nn.Embedding(
            cfg.query_vocab_size, cfg.embed_dim, padding_idx=PAD
        )
        self.lstm = nn.LSTM(cfg.embed_dim, cfg.hidden_dim, batch_first=True)
        self.att_proj = nn.Linear(cfg.hidden_dim, cfg.hidden_dim)
        self.att_context = nn.Parameter(torch.zeros(cfg.hidden_dim))

    def forward(self, ids: torch.Tensor, return_attention: bool = False):
        if ids.dim() == 1:
            ids = ids.unsqueeze(0)
        mask = ids != PAD
        if not bool(mask.any(dim=1).all()):
            raise EmptyQuery("query contains no non-pad tokens")
        emb = self.embedding(ids)
        states, _ = self.lstm(emb)
        scores = (self.att_proj(states) * self.att_context).sum(dim=-1)
        scores = scores.masked_fill(~mask, float("-inf"))
        alpha = torch.softmax(scores, dim=-1)
        pooled = torch.einsum("bl,blh->bh", alpha, states)
        if return_attention:
            return pooled, alpha
        return pooled


class JointEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.code = CodeEncoder(cfg)
        self.query = QueryEncoder(cfg)


def initialize_parameters(model: nn.Module, seed: int) -> None:
    """Deterministic init: uniform(-0.1, 0.1) tables and projections,
    orthogonal recurrent matrices, zero biases and contexts."""
    gen = torch.Generator().manual_seed(seed)
    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        with torch.no_grad():
            if "att_context" in name or name.endswith(".bias") or "bias" in name:
                p.zero_()
                if "att_context" in name:
                    p.uniform_(-0.1, 0.1, generator=gen)
            elif "weight_hh" in name or "weight_ih" in name:
                _orthogonal_(p, gen)
            else:
                p.uniform_(-0.1, 0.1, generator=gen)
    for mod in model.modules():
        if isinstance(mod, nn.Embedding):
            with torch.no_grad():
                mod.weight[PAD].zero_()


def _orthogonal_(p: torch.Tensor, gen: torch.Generator) -> None:
    rows, cols = p.shape[0], int(np.prod(p.shape[1:]))
    flat = torch.randn(max(rows, cols), min(rows, cols), generator=gen, dtype=p.dtype)
    q, r = torch.linalg.qr(flat)
    q = q * torch.sign(torch.diagonal(r)).unsqueeze(0)
    if rows < cols:
        q = q.T
    with torch.no_grad():
        p.copy_(q[:rows, :cols].reshape(p.shape))


# ---------------------------------------------------------------------------
# gradient checking


def gradient_check(model: nn.Module, loss_fn, epsilon: float = 1e-5) -> float:
    """Max relative difference between autograd gradients of `loss_fn()`
    and central finite differences over every parameter entry. The model
    must already be in double precision; loss_fn re-evaluates the loss
    from the current parameter values."""
    model.zero_grad()
    loss = loss_fn()
    loss.backward()
    worst = 0.0
    for _, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        grad = p.grad
        if grad is None:
            grad = torch.zeros_like(p)
        flat = p.data.view(-1)
        gflat = grad.view(-1)
        for i in range(flat.numel()):
            orig = float(flat[i])
            flat[i] = orig + epsilon
            with torch.no_grad():
                up = float(loss_fn())
            flat[i] = orig - epsilon
            with torch.no_grad():
                down = float(loss_fn())
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            analytic = float(gflat[i])
            denom = max(abs(analytic), abs(numeric), 1e-2)
            worst = max(worst, abs(analytic - numeric) / denom)
    model.zero_grad()
    return worst


# ---------------------------------------------------------------------------
# checkpoint container: JSON header + raw little-endian tensor payload

_MAGIC = b"VFGCKPT1"
_DTYPES = {"float32": np.float32, "float64": np.float64, "int64": np.int64}


def save_checkpoint(path, model: JointEncoder, vocab_hashes: dict, extra: dict | None = None) -> None:
    """Atomic write of config + named tensors. Layout: 8-byte magic,
    u64 header length, UTF-8 JSON header, then each tensor's row-major
    little-endian bytes at the offsets the header lists."""
    tensors = []
    payload = bytearray()
    for name, p in sorted(model.state_dict().items()):
        arr = p.detach().cpu().numpy()
        dtype = str(arr.dtype)
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {dtype}")
        raw = np.ascontiguousarray(arr).astype(arr.dtype, copy=False).tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)
    header = {
        "config": model.cfg.to_json_dict(),
        "vocab_hashes": dict(vocab_hashes),
        "tensors": tensors,
    }
    if extra:
        header["extra"] = dict(extra)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[JointEncoder, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError("not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    cfg = EncoderConfig.from_json_dict(header["config"])
    model = JointEncoder(cfg)
    state = {}
    for spec in header["tensors"]:
        raw = payload[spec["offset"] : spec["offset"] + spec["nbytes"]]
        arr = np.frombuffer(raw, dtype=_DTYPES[spec["dtype"]]).reshape(spec["shape"])
        state[spec["name"]] = torch.from_numpy(arr.copy())
    model.load_state_dict(state)
    if any(spec["dtype"] == "float64" for spec in header["tensors"]):
        model.double()
    return model, header


def vocab_hashes(ir_vocab: Vocabulary, query_vocab: Vocabulary) -> dict:
    return {"ir": ir_vocab.content_hash(), "query": query_vocab.content_hash()}


def checkpoint_fingerprint(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
