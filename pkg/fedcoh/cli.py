"""
Command-line entry point.

    fedcoh check --trace run.jsonl --model federated [--location x] [--bound 20]
    fedcoh litmus --name all --seed 7 --runs 100
    fedcoh bench --mode model --cores 384 --lat-disagg 800 [--out curve.csv]
    fedcoh queue-demo --producers 2 --consumers 4 --items 1000

Exit codes: 0 success, 1 failed check or expectation, 2 usage error. A
history over the --bound limit gets no verdict and exits 1 like a failed
check; the trace itself was valid. Errors are printed on stderr as
{"error": <type>, "message": <text>}.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import NoReturn, Optional, Sequence, TextIO

from fedcoh import __version__
from fedcoh.config.settings import get_settings
from fedcoh.exceptions import FedcohError, HistoryBoundExceededError
from fedcoh.schemas.verdict import CoherenceModel
from fedcoh.services.bench import (
    ContentionParams,
    OverheadModel,
    contention_curve,
    emit_curve_csv,
    model_overhead,
    sim_curve,
)
from fedcoh.services.checker import check, project_histories, verdict_to_json
from fedcoh.services.litmus import litmus_catalog, litmus_run
from fedcoh.services.queue_demo import run_queue_demo
from fedcoh.services.topology import build_topology
from fedcoh.services.trace_io import read_trace
from fedcoh.utils.logging import get_logger, log_with_context, setup_logging

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(message)


def _emit_error(kind: str, message: str, stream: TextIO) -> None:
    stream.write(json.dumps({"error": kind, "message": message}) + "\n")


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = _Parser(prog="fedcoh", description="Federated coherence toolkit")
    parser.add_argument("--version", action="version", version=f"fedcoh {__version__}")
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    parser.add_argument("--log-format", choices=["text", "json"], default=None, help="Override LOG_FORMAT")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_check = sub.add_parser("check", help="Check a recorded trace against a coherence model")
    p_check.add_argument("--trace", required=True, type=Path, help="JSON-lines trace file")
    p_check.add_argument("--model", required=True, choices=[m.value for m in CoherenceModel])
    p_check.add_argument("--location", action="append", default=None, help="Only check this location")
    p_check.add_argument("--bound", type=int, default=None, help="Event bound per location")

    p_litmus = sub.add_parser("litmus", help="Run litmus cases")
    p_litmus.add_argument("--name", default="all", help="Case name or 'all'")
    p_litmus.add_argument("--seed", type=int, default=settings.FEDCOH_SEED)
    p_litmus.add_argument("--runs", type=int, default=1)
    p_litmus.add_argument("--workers", type=int, default=1, help="Threads for independent runs")

    p_bench = sub.add_parser("bench", help="Coherence overhead curves as CSV")
    p_bench.add_argument("--mode", choices=["model", "sim"], default="model")
    p_bench.add_argument("--params", type=Path, default=None, help="OverheadModel JSON (model) or ContentionParams JSON (sim)")
    p_bench.add_argument("--cores", type=int, default=None)
    p_bench.add_argument("--lat-disagg", type=float, default=None)
    p_bench.add_argument("--nodes", type=int, default=1)
    p_bench.add_argument("--numa-per-node", type=int, default=None)
    p_bench.add_argument("--soft-per-numa", type=int, default=None)
    p_bench.add_argument("--cores-per-soft", type=int, default=None)
    p_bench.add_argument("--domains", type=int, default=1, help="Soft-NUMA domains to spread over (sim)")
    p_bench.add_argument("--seed", type=int, default=settings.FEDCOH_SEED)
    p_bench.add_argument("--out", type=Path, default=None, help="CSV path (stdout when omitted)")

    p_demo = sub.add_parser("queue-demo", help="Run the MPMC queue end to end")
    p_demo.add_argument("--producers", type=int, default=2)
    p_demo.add_argument("--consumers", type=int, default=4)
    p_demo.add_argument("--items", type=int, default=1000)
    p_demo.add_argument("--capacity", type=int, default=settings.QUEUE_CAPACITY)
    p_demo.add_argument("--seed", type=int, default=settings.FEDCOH_SEED)
    p_demo.add_argument("--evict-rate", type=float, default=0.0)
    return parser


def cmd_check(args: argparse.Namespace, out: TextIO) -> int:
    trace = read_trace(args.trace)
    histories = project_histories(trace, args.location)
    if args.location:
        missing = [loc for loc in args.location if loc not in histories]
        if missing:
            raise UsageError(f"Trace has no events for {', '.join(missing)}")
    accepted = True
    for loc in sorted(histories):
        verdict = check(histories[loc], args.model, bound=args.bound)
        accepted = accepted and verdict.accepted
        out.write(verdict_to_json(verdict) + "\n")
    return EXIT_OK if accepted else EXIT_FAILED


def cmd_litmus(args: argparse.Namespace, out: TextIO) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    names = [case.name for case in litmus_catalog()] if args.name == "all" else [args.name]
    ok = True
    for name in names:
        report = litmus_run(name, seed=args.seed, runs=args.runs, workers=args.workers)
        ok = ok and report.ok
        out.write(report.to_json() + "\n")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_bench(args: argparse.Namespace, out: TextIO) -> int:
    if args.mode == "model":
        model = OverheadModel.from_json(args.params.read_text()) if args.params else OverheadModel.default()
        t = build_topology(args.nodes, args.numa_per_node or 2, args.soft_per_numa or 1,
                           args.cores_per_soft or 128)
        curve = model_overhead(model, t, args.cores or 256, args.lat_disagg)
    else:
        t = build_topology(args.nodes, args.numa_per_node or 1, args.soft_per_numa or 8,
                           args.cores_per_soft or 8, lat_disagg=args.lat_disagg)
        if args.params:
            curve = contention_curve(ContentionParams.from_json(args.params.read_text()), t)
        else:
            curve = sim_curve(t, args.cores or 8, args.domains, seed=args.seed)
    if args.out is None:
        emit_curve_csv(curve, out)
    else:
        emit_curve_csv(curve, args.out)
    return EXIT_OK


def cmd_queue_demo(args: argparse.Namespace, out: TextIO) -> int:
    for flag in ("producers", "consumers", "items", "capacity"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag} must be >= 1")
    report = run_queue_demo(
        producers=args.producers,
        consumers=args.consumers,
        items=args.items,
        capacity=args.capacity,
        seed=args.seed,
        eviction_rate=args.evict_rate,
    )
    out.write(json.dumps(report.to_dict(), separators=(",", ":")) + "\n")
    return EXIT_OK if report.exactly_once else EXIT_FAILED


COMMANDS = {
    "check": cmd_check,
    "litmus": cmd_litmus,
    "bench": cmd_bench,
    "queue-demo": cmd_queue_demo,
}


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None,
         err: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(list(argv) if argv is not None else None)
        if args.log_level or args.log_format:
            setup_logging(args.log_level, args.log_format)
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        _emit_error("UsageError", str(e), err)
        return EXIT_USAGE
    except HistoryBoundExceededError as e:
        log_with_context(logger, logging.WARNING, f"Check not completed: {e}", error_type=type(e).__name__)
        _emit_error(type(e).__name__, str(e), err)
        return EXIT_FAILED
    except (FedcohError, OSError, ValueError) as e:
        log_with_context(logger, logging.ERROR, f"Command failed: {e}", error_type=type(e).__name__)
        _emit_error(type(e).__name__, str(e), err)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
