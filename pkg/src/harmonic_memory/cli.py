"""Command line entry point.

Exit codes: 0 success, 1 invalid input, 2 usage, 3 config error, 4 I/O or
snapshot error, 5 provider error, 6 a theory check failed, 7 store busy.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from .config import EngineConfig
from .engine import Engine, dumps, load_source_file, result_to_dict
from .errors import ConfigError, EngineError, ProviderError, SnapshotError, StoreBusyError

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_PROVIDER = 5
EXIT_CHECK_FAILED = 6
EXIT_BUSY = 7

DEFAULT_STORE = "memory.snapshot"


def _parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON engine config")
    common.add_argument("--store", type=Path, help=f"snapshot path (default: config store_path, else {DEFAULT_STORE})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="harmonic-memory", description="Agent memory engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="ingest source files into the store")
    p.add_argument("--source", type=Path, action="append", required=True, help="source file (repeatable)")

    p = sub.add_parser("query", parents=[common], help="retrieve memories for a query")
    p.add_argument("text")
    p.add_argument("--mode", choices=("semantic", "policy"), default="semantic")
    p.add_argument("--set", dest="overrides", type=_parse_override, action="append", default=[],
                   metavar="KEY=VALUE", help="override a retrieval setting, e.g. --set mode=gated")
    p.add_argument("--json", action="store_true", help="print the result as JSON")

    sub.add_parser("stats", parents=[common], help="print store statistics")

    p = sub.add_parser("export", parents=[common], help="write a snapshot of the store")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("theory", parents=[common], help="run the special-case equivalence checks")
    p.add_argument("--suite", choices=("rag", "kg", "strictness", "efficiency", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=10)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("serve", parents=[common], help="run the HTTP JSON service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    return parser


def _load_config(args: argparse.Namespace) -> EngineConfig:
    cfg = EngineConfig.load(args.config) if args.config else EngineConfig()
    if args.store is not None:
        cfg.store_path = args.store
    elif cfg.store_path is None:
        cfg.store_path = Path(DEFAULT_STORE)
    return cfg


def _print_result(result, store) -> None:
    if not result.entries:
        print("no memories retrieved")
    for entry_id in result.entries:
        e = store.entries[entry_id]
        print(f"[{entry_id}] {e.abstraction}: {e.value}  ({result.scores[entry_id]:.3f})")
    for episode_id, members in result.episodic_groups.items():
        print(f"episode {episode_id}: {', '.join(members)}")
    for step in result.trace:
        print(f"  t={step.t} b={step.budget} |W|={len(step.working)} |F|={len(step.frontier)} -> {step.action}")
    print(f"steps={result.steps_taken} budget_spent={result.budget_spent}")
    for flag in result.flags:
        print(f"flag: {flag}")


def _run_theory(args: argparse.Namespace) -> int:
    from .theory import SUITES, run_suite

    suites = SUITES if args.suite == "all" else (args.suite,)
    checks = [c for s in suites for c in run_suite(s, seed=args.seed, instances=args.instances)]
    if args.json:
        print(dumps([c.to_dict() for c in checks]))
    else:
        for c in checks:
            extra = ""
            if c.suite == "strictness":
                extra = f"  |gated|={c.detail['gated']} k={c.detail['k']}"
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite}:{c.name}{extra}")
        print(f"{sum(c.passed for c in checks)}/{len(checks)} passed")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED


def run(args: argparse.Namespace) -> int:
    if args.command == "theory":
        return _run_theory(args)
    cfg = _load_config(args)
    if args.command == "serve":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(Engine(cfg)), host=args.host, port=args.port)
        return EXIT_OK

    engine = Engine(cfg)
    if args.command == "ingest":
        for path in args.source:
            report = engine.ingest(load_source_file(path))
            print(dumps({"source": str(path), **report.to_dict()}))
    elif args.command == "query":
        result = engine.query(args.text, args.mode, dict(args.overrides))
        if args.json:
            print(dumps(result_to_dict(result, engine.store)))
        else:
            _print_result(result, engine.store)
    elif args.command == "stats":
        print(dumps(engine.stats()))
    elif args.command == "export":
        engine.export(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER
    except (OSError, SnapshotError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StoreBusyError as exc:
        print(f"store busy: {exc}", file=sys.stderr)
        return EXIT_BUSY
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
