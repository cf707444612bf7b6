"""Tokenization, vocabulary handling and corpus ingestion.

The corpus format is JSON-Lines with one record per snippet:
{"id": str, "query": str (raw comment), "ir": str, "code": str}.
Records are filtered the same way the training data was curated: first
comment sentence as the query, 3..30 query words, 5..30 code lines, no
constructors or test functions, no duplicates.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class EmptyComment(ValueError):
    pass


class SchemaError(ValueError):
    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class IoError(OSError):
    pass


_CAMEL_1 = re.compile(r"([a-z0-9])([A-Z])")
_CAMEL_2 = re.compile(r"([A-Z]+)([A-Z][a-z])")
_NON_ALNUM = re.compile(r"[^0-9a-zA-Z]+")


def split_identifier(token: str) -> list[str]:
    """Lowercase subtokens split at underscores, other separators and
    camel-case boundaries."""
    token = _CAMEL_2.sub(r"\1 \2", token)
    token = _CAMEL_1.sub(r"\1 \2", token)
    pieces = _NON_ALNUM.split(token)
    return [p.lower() for p in pieces if p]


def tokenize_text(text: str) -> list[str]:
    """Whitespace words refined by identifier splitting."""
    out: list[str] = []
    for word in text.split():
        out.extend(split_identifier(word))
    return out


_SENTENCE_END = re.compile(r"[.!?]")
_DECORATION = re.compile(r"^[/*\s-]+|[*/\s-]+$")


def first_sentence(comment: str) -> str:
    """Text up to the first sentence terminator, with comment decoration
    characters stripped."""
    # strip block/line comment markers and per-line asterisk gutters
    lines = []
    for line in comment.splitlines():
        line = _DECORATION.sub("", line)
        if line:
            lines.append(line)
    text = " ".join(lines).strip()
    m = _SENTENCE_END.search(text)
    if m:
        text = text[: m.start()]
    text = text.strip()
    if not text:
        raise EmptyComment("comment has no sentence content")
    return text


class RejectReason(enum.Enum):
    QueryTooShort = "query_too_short"
    QueryTooLong = "query_too_long"
    CodeTooShort = "code_too_short"
    CodeTooLong = "code_too_long"
    Duplicate = "duplicate"
    ConstructorOrTest = "constructor_or_test"
    EmptyQuery = "empty_query"
    UserPattern = "user_pattern"


MIN_QUERY_WORDS = 3
MAX_QUERY_WORDS = 30
MIN_CODE_LINES = 5
MAX_CODE_LINES = 30


def looks_like_constructor_or_test(name: str, file_stem: str | None = None) -> bool:
    low = name.lower()
    if low.startswith("test") or low.endswith("test") or low.endswith("_tests"):
        return True
    return file_stem is not None and low == file_stem.lower()


def filter_pair(
    query: str,
    code_line_count: int,
    seen: set,
    name: str | None = None,
    file_stem: str | None = None,
    code_text: str = "",
) -> RejectReason | None:
    """None when the pair is accepted; otherwise the reason it is dropped.
    `seen` collects duplicate fingerprints and keeps first occurrences."""
    if name and looks_like_constructor_or_test(name, file_stem):
        return RejectReason.ConstructorOrTest
    words = query.split()
    if len(words) < MIN_QUERY_WORDS:
        return RejectReason.QueryTooShort
    if len(words) > MAX_QUERY_WORDS:
        return RejectReason.QueryTooLong
    if code_line_count < MIN_CODE_LINES:
        return RejectReason.CodeTooShort
    if code_line_count > MAX_CODE_LINES:
        return RejectReason.CodeTooLong
    normalized = " ".join(words).lower() + "\0" + " ".join(code_text.split()).lower()
    digest = hashlib.sha256(normalized.encode()).hexdigest()
    if digest in seen:
        return RejectReason.Duplicate
    seen.add(digest)
    return None


# ---------------------------------------------------------------------------
# vocabulary


@dataclass
class Vocabulary:
    token_to_id: dict = field(default_factory=dict)
    id_to_token: list = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    frequencies: dict = field(default_factory=dict)
    max_size: int = 0

    def __len__(self) -> int:
        return len(self.id_to_token)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode(self, tokens, max_len: int) -> list[int]:
        return encode_sequence(tokens, self, max_len)

    def content_hash(self) -> str:
        payload = "\n".join(self.id_to_token).encode()
        return hashlib.sha256(payload).hexdigest()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token[2:]:
                fh.write(f"{tok}\t{self.frequencies.get(tok, 0)}\n")

    @classmethod
    def load(cls, path, max_size: int = 0) -> "Vocabulary":
        v = cls(max_size=max_size)
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, freq = line.partition("\t")
                v.token_to_id[tok] = len(v.id_to_token)
                v.id_to_token.append(tok)
                v.frequencies[tok] = int(freq or 0)
        if not v.max_size:
            v.max_size = len(v.id_to_token)
        return v


def build_vocab(token_stream, max_size: int) -> Vocabulary:
    """Keep the max_size-2 most frequent tokens (plus PAD/UNK); ties break
    lexicographically."""
    if max_size < 2:
        raise ValueError("max_size must leave room for PAD and UNK")
    counts: dict = {}
    for tok in token_stream:
        counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    v = Vocabulary(max_size=max_size)
    for tok, freq in ranked[: max_size - 2]:
        v.token_to_id[tok] = len(v.id_to_token)
        v.id_to_token.append(tok)
        v.frequencies[tok] = freq
    return v


def encode_sequence(tokens, vocab: Vocabulary, max_len: int) -> list[int]:
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    ids = [vocab.id(t) for t in list(tokens)[:max_len]]
    ids.extend([PAD] * (max_len - len(ids)))
    return ids


# ---------------------------------------------------------------------------
# corpus


@dataclass(frozen=True)
class CorpusPair:
    id: str
    query: tuple[str, ...]
    ir_text: str
    code_text: str
    code_line_count: int


def load_corpus(
    path,
    reject_pattern_file=None,
    name_field: str = "name",
) -> list[CorpusPair]:
    """Read and filter a JSONL corpus; rejects are logged, not fatal."""
    patterns = []
    if reject_pattern_file:
        with open(reject_pattern_file, encoding="utf-8") as fh:
            patterns = [
                re.compile(line.strip())
                for line in fh
                if line.strip() and not line.startswith("#")
            ]
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise IoError(str(exc)) from exc
    pairs: list[CorpusPair] = []
    seen: set = set()
    reject_counts: dict = {}
    with fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line_no) from exc
            for field_name in ("id", "query", "ir", "code"):
                if field_name not in record:
                    raise SchemaError(f"missing field '{field_name}'", line_no)
            try:
                sentence = first_sentence(record["query"])
            except EmptyComment:
                reject_counts[RejectReason.EmptyQuery] = (
                    reject_counts.get(RejectReason.EmptyQuery, 0) + 1
                )
                continue
            if any(p.search(sentence) for p in patterns):
                reject_counts[RejectReason.UserPattern] = (
                    reject_counts.get(RejectReason.UserPattern, 0) + 1
                )
                continue
            code = record["code"]
            line_count = len([ln for ln in code.splitlines() if ln.strip()])
            reason = filter_pair(
                sentence,
                line_count,
                seen,
                name=record.get(name_field),
                file_stem=record.get("file_stem"),
                code_text=code,
            )
            if reason is not None:
                reject_counts[reason] = reject_counts.get(reason, 0) + 1
                continue
            pairs.append(
                CorpusPair(
                    id=str(record["id"]),
                    query=tuple(tokenize_text(sentence)),
                    ir_text=record["ir"],
                    code_text=code,
                    code_line_count=line_count,
                )
            )
    if reject_counts:
        for reason, count in sorted(reject_counts.items(), key=lambda kv: kv[0].value):
            log.info("rejected %d pairs: %s", count, reason.value)
    if not pairs:
        log.warning("corpus %s produced no pairs", path)
    return pairs


def split_corpus(pairs, seed: int, test_fraction: float = 0.05):
    """Seeded shuffle and split into (train, test)."""
    order = list(pairs)
    random.Random(seed).shuffle(order)
    n_test = int(round(len(order) * test_fraction))
    return order[n_test:], order[:n_test]


def save_pairs(pairs, path) -> None:
    """Write already-filtered pairs as JSONL (the dataset-build output)."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "id": p.id,
                        "query_tokens": list(p.query),
                        "ir": p.ir_text,
                        "code": p.code_text,
                        "code_line_count": p.code_line_count,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_pairs(path) -> list[CorpusPair]:
    """Read a dataset-build output file (no re-filtering)."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            pairs.append(
                CorpusPair(
                    id=rec["id"],
                    query=tuple(rec["query_tokens"]),
                    ir_text=rec["ir"],
                    code_text=rec["code"],
                    code_line_count=rec["code_line_count"],
                )
            )
    return pairs
