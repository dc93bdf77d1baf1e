"""Command-line entry point: ingest, index, query, eval, serve."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .kg import IngestError, SnapshotError, load_graph_files
from .pipeline import ABLATIONS, PipelineConfig, PipelineError, load_config, load_deps, run

logger = logging.getLogger("hykge")

EXIT_ERROR = 1
EXIT_MISSING = 2
EXIT_PROVIDER = 3

_OVERRIDES = {"k": "k", "top_k": "top_k", "delta": "delta", "lc": "lc", "oc": "oc"}


def _config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    changes = {field: getattr(args, dest) for dest, field in _OVERRIDES.items() if getattr(args, dest, None) is not None}
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _cmd_ingest(args: argparse.Namespace) -> int:
    for p in (args.entities, args.triples):
        if not Path(p).is_file():
            print(f"error: no such file: {p}", file=sys.stderr)
            return EXIT_MISSING
    try:
        g = load_graph_files(args.entities, args.triples, auto_create=args.auto_create)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    g.save(args.out)
    print(f"entities\t{len(g.entities)}")
    print(f"relations\t{len(g.relations)}")
    print(f"triplets\t{g.num_triplets}")
    print(f"fingerprint\t{g.fingerprint}")
    return 0


def _cmd_index(args: argparse.Namespace) -> int:
    from .kg import KnowledgeGraph
    from .linker import load_or_build
    from .pipeline import build_providers

    cfg = _config(args)
    if not cfg.graph_path or not cfg.entity_index_path:
        print("error: config needs graph_path and entity_index_path", file=sys.stderr)
        return EXIT_ERROR
    g = KnowledgeGraph.load(cfg.graph_path)
    index = load_or_build(cfg.entity_index_path, g, build_providers(cfg, g).embedder)
    print(f"rows\t{index.matrix.shape[0]}")
    print(f"dim\t{index.dim}")
    print(f"provider\t{index.provider_tag}")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.ablation:
        cfg = cfg.with_ablation(args.ablation)
    try:
        trace = run(args.question, cfg, load_deps(cfg))
    except PipelineError as exc:
        print(f"error: provider failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_PROVIDER
    if args.trace:
        print(trace.to_json(indent=2))
    else:
        print(trace.answer)
    return 0


def _knowledge_text(trace) -> str | None:
    texts = [c["text"] for c in trace.pruned]
    return "\n".join(texts) if texts else None


def _cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import evaluate, format_table, load_dataset
    from .reporting import write_report

    cfg = _config(args)
    items = load_dataset(args.dataset)
    ablations = args.ablations.split(",") if args.ablations else ["full"]
    for name in ablations:
        if name not in ABLATIONS:
            print(f"error: unknown ablation {name!r}", file=sys.stderr)
            return EXIT_ERROR
    try:
        deps = load_deps(cfg)
    except PipelineError as exc:
        print(f"error: provider failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_PROVIDER
    reports, traces = [], {}
    for name in ablations:
        run_cfg = cfg.with_ablation(name)
        collected = traces.setdefault(name, [])

        def answer_fn(prompt_text: str, _run: int, run_cfg=run_cfg, collected=collected):
            trace = run(prompt_text, run_cfg, deps)
            collected.append(trace)
            return trace.answer, _knowledge_text(trace)

        try:
            reports.append(evaluate(items, answer_fn, args.runs, tokenizer=deps.tokenizer, label=name))
        except PipelineError as exc:
            print(f"error: provider failure in stage {exc.stage}: {exc.cause}", file=sys.stderr)
            return EXIT_PROVIDER
    paths = write_report(reports, args.out, traces)
    print(format_table(reports))
    for kind, path in paths.items():
        logger.info("wrote %s: %s", kind, path)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import ServiceState, TraceStore, create_app

    cfg = _config(args)
    state = ServiceState(traces=TraceStore(args.trace_capacity, args.trace_spill))
    app = create_app(state, loader=lambda: (cfg, load_deps(cfg)))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hykge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tuning = argparse.ArgumentParser(add_help=False)
    tuning.add_argument("--config", help="TOML or JSON pipeline config")
    tuning.add_argument("--k", type=int, help="maximum chain length in hops")
    tuning.add_argument("--top-k", dest="top_k", type=int, help="chains kept after rerank")
    tuning.add_argument("--delta", type=float, help="linking similarity threshold")
    tuning.add_argument("--lc", type=int, help="fragment window length")
    tuning.add_argument("--oc", type=int, help="fragment overlap")

    p = sub.add_parser("ingest", help="build a graph snapshot from entity and triple files")
    p.add_argument("entities")
    p.add_argument("triples")
    p.add_argument("out")
    p.add_argument("--auto-create", action="store_true", help="create entities for unknown triple endpoints")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("index", parents=[tuning], help="build or refresh the entity embedding cache")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("query", parents=[tuning], help="answer one question")
    p.add_argument("question")
    p.add_argument("--trace", action="store_true", help="print the full trace as JSON")
    p.add_argument("--ablation", choices=list(ABLATIONS))
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", parents=[tuning], help="score a JSON-lines dataset and write a report")
    p.add_argument("dataset")
    p.add_argument("--out", default="report", help="output directory")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--ablations", help="comma-separated ablation names")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", parents=[tuning], help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--trace-capacity", type=int, default=1000)
    p.add_argument("--trace-spill", help="append stored traces to this JSONL file")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING if isinstance(exc, FileNotFoundError) else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
