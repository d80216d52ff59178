"""Command-line entry point wiring the pipeline stages.

Exit codes: 0 success, 1 runtime failure, 2 usage error (argparse default).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import HopforgeError
from .pipeline import run_stage, validate_config


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the run config file")
    parser.add_argument("--run-dir", default=None, help="override the config's run_directory")
    parser.add_argument("--force", action="store_true", help="re-run the stage even if done")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hopforge",
        description="Synthesize hop-aware multi-hop QA benchmarks and evaluate tool-calling agents.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("ingest", "index", "verify"):
        p = sub.add_parser(name)
        _add_common(p)

    p = sub.add_parser("synthesize")
    _add_common(p)
    p.add_argument("--hops", type=int, choices=(2, 3, 4), default=None)
    p.add_argument("--topology", choices=("inference", "comparison", "both"), default=None)

    p = sub.add_parser("evaluate")
    _add_common(p)
    p.add_argument("--model", default=None, help="evaluate a single configured subject model")
    p.add_argument("--hop-aware", action="store_true", default=None,
                   help="also run episodes on every ladder prefix question")
    p.add_argument("--step-cap", type=int, default=None)
    p.add_argument("--topk-ceiling", type=int, default=None)

    p = sub.add_parser("report")
    _add_common(p)
    p.add_argument("--group-by", default=None,
                   help="comma-separated subset of model,topology,hops")
    p.add_argument("--hop-aware", action="store_true",
                   help="require hop-aware results (MaxD from full ladder coverage)")

    p = sub.add_parser("review-serve")
    _add_common(p)
    p.add_argument("--port", type=int, default=8199)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def _serve_review(config, host: str, port: int) -> None:
    import uvicorn

    from .corpus import DocumentStore
    from .pipeline import _read_jsonl
    from .review import ReviewStore
    from .review_api import create_review_app

    run_dir = config.run_dir
    items = {rec["item_id"]: rec for rec in _read_jsonl(run_dir / "benchmark.jsonl")}
    if not items:
        raise HopforgeError("benchmark export is empty; run verify first")
    if len(config.annotators) < 3:
        raise HopforgeError("review.annotators must list at least 3 annotator ids")
    documents = DocumentStore.load(run_dir / "documents.jsonl")
    store = ReviewStore(event_log=run_dir / "review.events.jsonl")
    unassigned = [i for i in items if i not in store.assignments]
    if unassigned:
        store.assign_items(sorted(unassigned), config.annotators)
    app = create_review_app(store, items, tokens=config.annotator_tokens or None,
                            documents=documents)
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = validate_config(args.config, run_dir_override=args.run_dir)
        if args.command == "review-serve":
            _serve_review(config, args.host, args.port)
            return 0
        kwargs = {}
        if args.command == "synthesize":
            kwargs = {"hops_target": args.hops, "topology": args.topology}
        elif args.command == "evaluate":
            kwargs = {
                "model_name": args.model,
                "hop_aware": args.hop_aware,
                "step_cap": args.step_cap,
                "topk_ceiling": args.topk_ceiling,
            }
        elif args.command == "report":
            group_by = args.group_by.split(",") if args.group_by else None
            kwargs = {"group_by": group_by, "require_hop_aware": args.hop_aware}
        manifest = run_stage(config, args.command, force=args.force, **kwargs)
        print(json.dumps({
            "run_id": manifest.run_id,
            "stage": args.command,
            "status": manifest.status(args.command),
            "counts": manifest.stages[args.command]["counts"],
        }))
        return 0
    except HopforgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
