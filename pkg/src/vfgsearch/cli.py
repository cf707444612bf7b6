"""Command-line interface.

Pipeline commands mirror the data flow: extract IR into graphs, optimize
them, build a dataset, train, build an index, then search/eval/serve.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import _toml
from .engine import (
    SearchEngine,
    SearchIndex,
    build_index,
    evaluate,
    evaluate_session,
)
from .encoders import checkpoint_fingerprint, load_checkpoint
from .ir import parse_module
from .optimize import TrivialOpcodeSet, optimize
from .textpipe import (
    Vocabulary,
    load_corpus,
    load_pairs,
    save_pairs,
    split_corpus,
)
from .train import TrainConfig, prepare_corpus, train
from .vfg import Vfg, build_vfg, graph_stats

log = logging.getLogger(__name__)


def _add_extract(sub):
    p = sub.add_parser("extract", help="parse IR and emit flow graphs")
    p.add_argument("--ir", required=True, help=".ll file")
    p.add_argument("--function", help="only this function (default: all)")
    p.add_argument("--out", required=True, help="output graph JSON (one function) "
                   "or directory (many)")
    p.add_argument("--dot", help="also write Graphviz output")
    p.add_argument("--optimized", action="store_true", help="emit the optimized graph")
    p.set_defaults(func=cmd_extract)


def cmd_extract(args) -> int:
    with open(args.ir, encoding="utf-8") as fh:
        module = parse_module(fh.read())
    functions = list(module.functions)
    if args.function:
        functions = [f for f in functions if f.name == args.function]
        if not functions:
            print(f"error: no function named {args.function}", file=sys.stderr)
            return 1
    if not functions:
        print("error: no function definitions found", file=sys.stderr)
        return 1
    many = len(functions) > 1
    if many:
        os.makedirs(args.out, exist_ok=True)
    for f in functions:
        g = build_vfg(f, module.function_names())
        if args.optimized:
            g, _ = optimize(g, f)
        out_path = os.path.join(args.out, f"{f.name}.json") if many else args.out
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(g.to_json())
        stats = graph_stats(g)
        print(f"{f.name}: {stats['node_count']} nodes, "
              f"{stats['data_edge_count']} data / {stats['control_edge_count']} control edges")
        if args.dot:
            dot_path = (
                os.path.join(args.dot, f"{f.name}.dot") if many else args.dot
            )
            if many:
                os.makedirs(args.dot, exist_ok=True)
            with open(dot_path, "w", encoding="utf-8") as fh:
                fh.write(g.to_dot())
    return 0


def _add_optimize(sub):
    p = sub.add_parser("optimize", help="reduce a built graph")
    p.add_argument("--in", dest="input", required=True, help="graph JSON")
    p.add_argument("--out", required=True, help="optimized graph JSON")
    p.add_argument("--stats", help="write reduction statistics JSON")
    p.add_argument("--trivial-opcodes", help="custom trivial-opcode list")
    p.set_defaults(func=cmd_optimize)


def cmd_optimize(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        g = Vfg.from_json(fh.read())
    trivial = (
        TrivialOpcodeSet.from_file(args.trivial_opcodes)
        if args.trivial_opcodes
        else None
    )
    og, stats = optimize(g, trivial=trivial)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(og.to_json())
    if args.stats:
        with open(args.stats, "w", encoding="utf-8") as fh:
            json.dump(stats.to_json_dict(), fh, indent=2, sort_keys=True)
    print(f"{stats.nodes_before} -> {stats.nodes_after} nodes "
          f"({stats.renamed} renamed)")
    return 0


def _add_dataset(sub):
    p = sub.add_parser("dataset", help="corpus curation")
    ds_sub = p.add_subparsers(dest="dataset_cmd", required=True)
    b = ds_sub.add_parser("build", help="filter a raw corpus and split it")
    b.add_argument("--raw", required=True, help="raw JSONL corpus")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=17)
    b.add_argument("--test-fraction", type=float, default=0.05)
    b.add_argument("--reject-patterns", help="file of regexes to drop queries")
    b.set_defaults(func=cmd_dataset_build)


def cmd_dataset_build(args) -> int:
    pairs = load_corpus(args.raw, reject_pattern_file=args.reject_patterns)
    if not pairs:
        print("error: no pairs survived filtering", file=sys.stderr)
        return 1
    train_pairs, test_pairs = split_corpus(pairs, args.seed, args.test_fraction)
    os.makedirs(args.out, exist_ok=True)
    save_pairs(train_pairs, os.path.join(args.out, "train.jsonl"))
    save_pairs(test_pairs, os.path.join(args.out, "test.jsonl"))
    print(f"{len(train_pairs)} train / {len(test_pairs)} test pairs")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train the joint encoders")
    p.add_argument("--corpus", required=True, help="dataset dir or train JSONL file")
    p.add_argument("--config", help="train TOML file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.set_defaults(func=cmd_train)


def load_train_config(path) -> TrainConfig:
    data = _toml.load(path)
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    flat.update(data.get("train", {}))
    known = set(TrainConfig.__dataclass_fields__)
    unknown = set(flat) - known
    if unknown:
        raise ValueError(f"unknown train config keys: {sorted(unknown)}")
    return TrainConfig(**flat)


def _corpus_file(path) -> str:
    return os.path.join(path, "train.jsonl") if os.path.isdir(path) else path


def cmd_train(args) -> int:
    config = load_train_config(args.config) if args.config else TrainConfig()
    pairs = load_pairs(_corpus_file(args.corpus))
    corpus = prepare_corpus(pairs, config)
    os.makedirs(args.out, exist_ok=True)
    corpus.ir_vocab.save(os.path.join(args.out, "ir_vocab.tsv"))
    corpus.query_vocab.save(os.path.join(args.out, "query_vocab.tsv"))
    with open(os.path.join(args.out, "train_config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_json_dict(), fh, indent=2, sort_keys=True)
    _, curve = train(corpus, config, out_dir=args.out, epochs=args.epochs)
    print(f"trained {len(curve)} epochs; final mean loss {curve[-1][1]:.6f}")
    return 0


def _add_index(sub):
    p = sub.add_parser("index", help="index management")
    idx_sub = p.add_subparsers(dest="index_cmd", required=True)
    b = idx_sub.add_parser("build", help="embed snippets into a searchable index")
    b.add_argument("--model-dir", required=True, help="training output directory")
    b.add_argument("--corpus", required=True, help="dataset dir or JSONL of pairs to index")
    b.add_argument("--out", required=True, help="index file")
    b.set_defaults(func=cmd_index_build)


def _load_model(model_dir):
    ckpt = os.path.join(model_dir, "model.ckpt")
    model, header = load_checkpoint(ckpt)
    return model, header, ckpt


def cmd_index_build(args) -> int:
    model, header, ckpt = _load_model(args.model_dir)
    pairs = load_pairs(_corpus_file(args.corpus))
    config = TrainConfig(**json.load(open(os.path.join(args.model_dir, "train_config.json"))))
    ir_vocab = Vocabulary.load(os.path.join(args.model_dir, "ir_vocab.tsv"))
    query_vocab = Vocabulary.load(os.path.join(args.model_dir, "query_vocab.tsv"))
    if header["vocab_hashes"]["ir"] != ir_vocab.content_hash():
        print("error: IR vocabulary does not match checkpoint", file=sys.stderr)
        return 1
    corpus = prepare_corpus_with_vocabs(pairs, config, ir_vocab, query_vocab)
    index = build_index(model, corpus.pairs, checkpoint_fingerprint(ckpt))
    index.save(args.out)
    print(f"indexed {len(index)} snippets -> {args.out}")
    return 0


def prepare_corpus_with_vocabs(pairs, config, ir_vocab, query_vocab):
    """Prepare pairs against existing vocabularies (index/eval time)."""
    from .encoders import EncodedGraph
    from .textpipe import encode_sequence
    from .train import PreparedCorpus, PreparedPair, graph_for_pair

    prepared = []
    skipped = []
    for pair in pairs:
        try:
            g = graph_for_pair(pair.ir_text)
        except Exception as exc:  # noqa: BLE001
            skipped.append((pair.id, str(exc)))
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


def _engine_from_args(args) -> SearchEngine:
    return SearchEngine.load(
        os.path.join(args.model_dir, "model.ckpt"),
        os.path.join(args.model_dir, "query_vocab.tsv"),
        args.index,
    )


def _add_search(sub):
    p = sub.add_parser("search", help="query an index from the command line")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=cmd_search)


def cmd_search(args) -> int:
    engine = _engine_from_args(args)
    results = engine.search(args.query, k=args.k)
    for hit in results:
        meta = engine.index.metadata.get(hit["id"], {})
        first_line = meta.get("code_text", "").splitlines()[:1]
        print(f"{hit['rank']:3d}. {hit['score']:+.4f}  {hit['id']}  "
              f"{first_line[0] if first_line else ''}")
    if not results:
        print("(no results)")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="score retrieval quality")
    p.add_argument("--model-dir")
    p.add_argument("--index")
    p.add_argument("--test", help="test pairs JSONL")
    p.add_argument("--buckets", help="bucket edges TOML")
    p.add_argument("--session", help="score an exported UI session instead")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_eval)


def cmd_eval(args) -> int:
    if args.session:
        with open(args.session, encoding="utf-8") as fh:
            report = evaluate_session(json.load(fh))
        print(json.dumps(report, indent=2, sort_keys=True))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
        return 0
    if not (args.model_dir and args.index and args.test):
        print("error: --model-dir, --index and --test are required", file=sys.stderr)
        return 1
    engine = _engine_from_args(args)
    config = TrainConfig(**json.load(open(os.path.join(args.model_dir, "train_config.json"))))
    pairs = load_pairs(args.test)
    ir_vocab = Vocabulary.load(os.path.join(args.model_dir, "ir_vocab.tsv"))
    corpus = prepare_corpus_with_vocabs(pairs, config, ir_vocab, engine.query_vocab)
    buckets = None
    if args.buckets:
        data = _toml.load(args.buckets)
        buckets = data.get("buckets", {k: v for k, v in data.items() if isinstance(v, list)})
    report = evaluate(engine, corpus.pairs, buckets)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
    return 0


def _add_serve(sub):
    p = sub.add_parser("serve", help="run the HTTP search service")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--bind", default="127.0.0.1:8080")
    p.add_argument("--feedback-log", default="feedback.jsonl")
    p.add_argument("--static-dir", help="UI bundle directory to serve at /")
    p.set_defaults(func=cmd_serve)


def cmd_serve(args) -> int:
    from .server import serve

    engine = _engine_from_args(args)
    serve(engine, args.bind, args.feedback_log, args.static_dir)
    return 0


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("VFGSEARCH_LOG", "INFO"),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = argparse.ArgumentParser(
        prog="vfgsearch",
        description="semantic code search over LLVM IR flow graphs",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    _add_extract(sub)
    _add_optimize(sub)
    _add_dataset(sub)
    _add_train(sub)
    _add_index(sub)
    _add_search(sub)
    _add_eval(sub)
    _add_serve(sub)
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
