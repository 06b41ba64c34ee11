"""Command-line interface: corpus generation, graph building, training,
evaluation, extraction, export, question answering, and the HTTP server.

Exit codes: 0 success, 1 user error (bad arguments, missing files,
malformed input), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import applications as apps
from .corpus import (
    Dataset,
    Vocab,
    default_grammar,
    events_to_jsonl,
    format_corpus,
    generate_synthetic,
    parse_corpus,
    split,
)
from .graph import GraphStore, canonicalize, export_cypher, export_json, import_json, ingest_sentences
from .ontology import EntityClass
from .training import TaggerModel, TrainConfig, evaluate, load_bundle, save_bundle, train


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are user errors
        raise UserError(message)


def _ratio(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise UserError(f"--split-ratio must be a:b:c, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise UserError(f"--split-ratio must be integers, got {text!r}") from None


def _read(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise UserError(f"no such file: {path}")
    return p.read_text(encoding="utf-8")


def _load_config(path: Optional[str], **overrides) -> TrainConfig:
    obj = {}
    if path:
        try:
            obj = json.loads(_read(path))
        except json.JSONDecodeError as exc:
            raise UserError(f"config {path}: {exc}") from exc
    obj.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise UserError(f"config: {exc}") from exc


def _split_dataset(dataset: Dataset, ratio, seed: int) -> Dataset:
    try:
        return split(dataset, ratio=ratio, seed=seed)
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def cmd_synth(args) -> int:
    dataset, events = generate_synthetic(default_grammar(args.seed), args.n)
    Path(args.corpus).write_text(format_corpus(dataset), encoding="utf-8")
    if args.events:
        Path(args.events).write_text(events_to_jsonl(events), encoding="utf-8")
    print(f"wrote {len(dataset)} sentences to {args.corpus}")
    return 0


def _build_graph_from_corpus(store: GraphStore, corpus_path: str) -> None:
    try:
        dataset = parse_corpus(_read(corpus_path))
    except ValueError as exc:
        raise UserError(f"{corpus_path}: {exc}") from exc
    stem = Path(corpus_path).stem
    ingest_sentences(store, ((f"{stem}-{i:05d}", s) for i, s in enumerate(dataset.sentences)))
    canonicalize(store)


def cmd_build_graph(args) -> int:
    store = GraphStore()
    _build_graph_from_corpus(store, args.corpus)
    Path(args.out).write_text(export_json(store), encoding="utf-8")
    stats = store.stats()
    print(f"graph written to {args.out}: {stats['nodes']} nodes, {stats['edges']} edges")
    return 0


def cmd_ingest(args) -> int:
    store = _load_graph(args.graph) if Path(args.graph).exists() else GraphStore()
    before = store.stats()
    _build_graph_from_corpus(store, args.corpus)
    Path(args.graph).write_text(export_json(store), encoding="utf-8")
    after = store.stats()
    print(f"ingested {args.corpus}: +{after['nodes'] - before['nodes']} nodes, "
          f"+{after['edges'] - before['edges']} edges")
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config, seed=args.seed)
    try:
        dataset = parse_corpus(_read(args.corpus))
    except ValueError as exc:
        raise UserError(f"{args.corpus}: {exc}") from exc
    dataset = _split_dataset(dataset, _ratio(args.split_ratio), config.seed)
    vocab = Vocab.from_sentences(dataset.subset("train"))
    model = TaggerModel(config, vocab)
    model, history = train(model, dataset, config, log_path=args.log)
    save_bundle(model, args.out)
    last = history[-1]
    print(f"trained {config.epochs} epochs; final train loss {last['train_loss']:.4f}"
          + (f", best val F1 {max(h.get('val_f1', 0.0) for h in history):.4f}" if "val_f1" in last else ""))
    print(f"model saved to {args.out}")
    return 0


_METRIC_ROWS = [
    ("Total", None),
    ("Equipment", EntityClass.EQUIPMENT),
    ("Process label", EntityClass.PROCESS_LABEL),
    ("Material", EntityClass.MATERIAL),
    ("State", EntityClass.STATE),
    ("Consequence", EntityClass.CONSEQUENCE),
]


def format_metrics_table(metrics) -> str:
    lines = [f"{'Entity type':<16}{'P (%)':>8}{'R (%)':>8}{'F1 (%)':>8}"]
    for label, cls in _METRIC_ROWS:
        c = metrics.total if cls is None else metrics.per_class[cls]
        lines.append(f"{label:<16}{100 * c.precision:>8.2f}{100 * c.recall:>8.2f}{100 * c.f1:>8.2f}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    try:
        dataset = parse_corpus(_read(args.corpus))
    except ValueError as exc:
        raise UserError(f"{args.corpus}: {exc}") from exc
    dataset = _split_dataset(dataset, _ratio(args.split_ratio), args.seed)
    sentences = dataset.subset(args.split)
    if not sentences:
        raise UserError(f"split {args.split!r} is empty")
    metrics = evaluate(model, sentences)
    print(format_metrics_table(metrics))
    return 0


def _load_model(path: str) -> TaggerModel:
    try:
        return load_bundle(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UserError(f"cannot load model from {path}: {exc}") from exc


def _load_graph(path: str) -> GraphStore:
    try:
        return import_json(_read(path))
    except ValueError as exc:
        raise UserError(f"{path}: {exc}") from exc


def cmd_extract(args) -> int:
    from .service import ApiError, AppState, _extract_spans

    state = AppState(model=_load_model(args.model))
    try:
        result = _extract_spans(state, args.text)
    except ApiError as exc:
        raise UserError(exc.message) from exc
    print(json.dumps(result, ensure_ascii=False, indent=2))
    return 0


def cmd_export(args) -> int:
    store = _load_graph(args.graph)
    if not store.canonical:
        canonicalize(store)
    if args.format == "cypher":
        sys.stdout.write(export_cypher(store))
    else:
        sys.stdout.write(export_json(store))
    return 0


def cmd_ask(args) -> int:
    store = _load_graph(args.graph)
    try:
        result = apps.answer(store, args.question, k=args.k)
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    print(json.dumps(result.to_json(), ensure_ascii=False, indent=2))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AppState, create_app

    # precedence: command line > config file > environment > defaults
    file_cfg = {}
    if args.config:
        try:
            file_cfg = json.loads(_read(args.config))
        except json.JSONDecodeError as exc:
            raise UserError(f"config {args.config}: {exc}") from exc
        unknown = set(file_cfg) - {"addr", "model", "graph", "ui"}
        if unknown:
            raise UserError(f"serve config: unknown keys {sorted(unknown)}")

    def pick(flag, key, env, default=None):
        return flag or file_cfg.get(key) or os.environ.get(env) or default

    addr = pick(args.addr, "addr", "ISKG_ADDR", "127.0.0.1:8000")
    model_path = pick(args.model, "model", "ISKG_MODEL")
    graph_path = pick(args.graph, "graph", "ISKG_GRAPH")
    ui_dir = pick(args.ui, "ui", "ISKG_UI")

    state = AppState()
    if model_path:
        state.model = _load_model(model_path)
    if graph_path and Path(graph_path).exists():
        state.store = _load_graph(graph_path)
        if not state.store.canonical:
            canonicalize(state.store)
    if graph_path:
        state.store_path = Path(graph_path)
    if ui_dir:
        if not Path(ui_dir).is_dir():
            raise UserError(f"ui directory not found: {ui_dir}")
        state.ui_dir = Path(ui_dir)

    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise UserError(f"--addr must be host:port, got {addr!r}")
    app = create_app(state)
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="iskg", description="HAZOP knowledge graph toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--corpus", required=True, help="output token<TAB>label file")
    p.add_argument("--events", help="output gold-event JSONL sidecar")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("build-graph", help="build a fresh graph from a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output graph JSON")
    p.set_defaults(fn=cmd_build_graph)

    p = sub.add_parser("ingest", help="add a labeled corpus to an existing graph file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--graph", required=True, help="graph JSON to update (created if missing)")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train", help="train the tagger on a labeled corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="JSON run config (documented keys, see README)")
    p.add_argument("--out", required=True, help="output model bundle directory")
    p.add_argument("--log", help="JSON-lines metrics log")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--split-ratio", default="8:1:1")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on a corpus split")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-ratio", default="8:1:1")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("extract", help="run entity extraction over one text")
    p.add_argument("--model", required=True)
    p.add_argument("text")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("export", help="export a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", default="cypher", choices=["cypher", "json"])
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("ask", help="question answering over a graph file")
    p.add_argument("--graph", required=True)
    p.add_argument("question")
    p.add_argument("-k", type=int, default=3)
    p.set_defaults(fn=cmd_ask)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--addr", help="host:port (env ISKG_ADDR)")
    p.add_argument("--model", help="model bundle directory (env ISKG_MODEL)")
    p.add_argument("--graph", help="graph JSON path (env ISKG_GRAPH)")
    p.add_argument("--ui", help="static UI directory (env ISKG_UI)")
    p.add_argument("--config", help="JSON file with addr/model/graph/ui keys")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:  # internal errors are distinguishable by exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
