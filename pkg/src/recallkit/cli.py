"""Command line entry point: ``recallkit <command> ...``.

Data commands talk to a running service (``--url``, default from
``RECALLKIT_URL`` or http://127.0.0.1:8765) or, with ``--data-dir``, open the
persisted store in-process. Results are printed as JSON.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from .client import ClientError, HttpClient, LocalClient

DEFAULT_URL = "http://127.0.0.1:8765"


def _print(obj: Any) -> None:
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _client(args: argparse.Namespace):
    if args.data_dir:
        from .config import ServiceConfig, build_engine

        cfg = ServiceConfig.load(args.config) if getattr(args, "config", None) else ServiceConfig.load()
        cfg.data_dir = args.data_dir
        return LocalClient(build_engine(cfg))
    return HttpClient(args.url)


def _close(client) -> None:
    if isinstance(client, LocalClient):
        client.engine.close()


def cmd_serve(args: argparse.Namespace) -> int:
    from .config import ServiceConfig
    from .service import serve

    cfg = ServiceConfig.load(args.config)
    if args.host:
        cfg.host = args.host
    if args.port:
        cfg.port = args.port
    serve(cfg)
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    text = sys.stdin.read() if args.file == "-" else Path(args.file).read_text("utf-8")
    lines = [line for line in text.splitlines() if line.strip()]
    client = _client(args)
    try:
        _print(client.ingest(args.owner, args.session, lines, args.idempotency_key))
    finally:
        _close(client)
    return 0


def cmd_process(args: argparse.Namespace) -> int:
    client = _client(args)
    try:
        _print(client.process(args.owner, args.idempotency_key))
    finally:
        _close(client)
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    client = _client(args)
    try:
        res = client.search(
            args.owner, args.query, args.k,
            include_historical=True if args.historical else None,
            now=args.now, session_id=args.session,
        )
    finally:
        _close(client)
    _print(res)
    return 0


def cmd_history(args: argparse.Namespace) -> int:
    client = _client(args)
    try:
        _print(client.history(args.owner, args.memory_id))
    finally:
        _close(client)
    return 0


def cmd_eval_run(args: argparse.Namespace) -> int:
    from .eval.clients import ChatClient, RemoteAnswerer, RemoteJudge
    from .eval.dataset import bundled_dataset_path, load_dataset
    from .eval.harness import EvalConfig, EvalPhaseError, run_eval, write_report

    path = Path(args.dataset)
    if not path.exists() and bundled_dataset_path(args.dataset).exists():
        path = bundled_dataset_path(args.dataset)
    dataset = load_dataset(path)
    client = LocalClient() if args.engine == "local" else HttpClient(args.engine)

    chat = None
    if args.answerer == "remote" or args.judge == "remote":
        if not args.llm_endpoint or not args.llm_model:
            print("remote answerer/judge need --llm-endpoint and --llm-model", file=sys.stderr)
            return 2
        chat = ChatClient(args.llm_endpoint, args.llm_model, api_key=os.environ.get(args.llm_api_key_env))
    answerer = RemoteAnswerer(chat) if args.answerer == "remote" else None
    judge = RemoteJudge(chat) if args.judge == "remote" else None

    try:
        outcome = run_eval(
            dataset, client, EvalConfig(k=args.k, answer_k=args.answer_k, parallelism=args.parallelism),
            answerer=answerer, judge=judge,
        )
    except EvalPhaseError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    finally:
        _close(client)
    json_path, table_path = write_report(outcome, args.report)
    print(table_path.read_text("utf-8"))
    print(f"report written to {json_path} and {table_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recallkit", description="Conversational memory service and tools.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    def connection(p: argparse.ArgumentParser) -> None:
        p.add_argument("--url", default=os.environ.get("RECALLKIT_URL", DEFAULT_URL), help="service base URL")
        p.add_argument("--data-dir", help="operate on this persisted store in-process instead of over HTTP")
        p.add_argument("--config", help="config file used with --data-dir")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON config file (environment variables override it)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("ingest", help="store message lines from a file ('-' for stdin)")
    connection(p)
    p.add_argument("--owner", required=True)
    p.add_argument("--session", required=True)
    p.add_argument("--file", required=True)
    p.add_argument("--idempotency-key")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("process", help="extract memories from pending messages")
    connection(p)
    p.add_argument("--owner", required=True)
    p.add_argument("--idempotency-key")
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("search", help="hybrid search over an owner's memories")
    connection(p)
    p.add_argument("--owner", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--historical", action="store_true", help="include superseded versions, oldest first")
    p.add_argument("--now", help="reference time, YYYY-MM-DDTHH:MM:SSZ")
    p.add_argument("--session", help="session id for CONTEXT-scoped memories")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("history", help="version chain of a memory")
    connection(p)
    p.add_argument("--owner", required=True)
    p.add_argument("--memory-id", required=True)
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("eval", help="evaluation harness")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    r = eval_sub.add_parser("run", help="run the five-phase evaluation")
    r.add_argument("--dataset", required=True, help="dataset JSON file, or the name of a bundled dataset")
    r.add_argument("--engine", required=True, help="service base URL, or 'local' for an in-process engine")
    r.add_argument("--report", required=True, help="output JSON path; a .txt table is written next to it")
    r.add_argument("--answerer", choices=["extractive", "remote"], default="extractive")
    r.add_argument("--judge", choices=["none", "remote"], default="none")
    r.add_argument("--k", type=int, default=10)
    r.add_argument("--answer-k", type=int, default=1)
    r.add_argument("--parallelism", type=int, default=4)
    r.add_argument("--llm-endpoint", help="chat-completions URL for the remote answerer/judge")
    r.add_argument("--llm-model")
    r.add_argument("--llm-api-key-env", default="RECALLKIT_LLM_API_KEY", help="environment variable holding the API key")
    r.set_defaults(func=cmd_eval_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
