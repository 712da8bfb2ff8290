"""Command-line entry point: sweeps, strategy comparison, model fitting and
prediction, topology inspection, and the fetch-and-add microbenchmark.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import re
import sys
from dataclasses import replace
from pathlib import Path

from . import bench, config, costmodel
from .config import ConfigError, SweepSpec, Topology, WorkloadSpec

MAX_COUNT = 2**63 - 1

_LITERAL_RE = re.compile(r"^(\d+)(?:\^(\d+)|e(\d+))?$")


def parse_comp_literal(text: str) -> int:
    """Exact integer from '<int>', '<int>^<int>' (power), or '<int>e<int>'
    (times a power of ten).  Values beyond 2^63 - 1 are rejected."""
    match = _LITERAL_RE.match(text.strip())
    if not match:
        raise ValueError(
            f"malformed count literal {text!r}; use <int>, <int>^<int>, or <int>e<int>"
        )
    base = int(match.group(1))
    if match.group(2) is not None:
        exponent = int(match.group(2))
        # base^exponent >= 2^(exponent*(bits-1)), so this rejects without
        # evaluating astronomically large powers
        if base >= 2 and exponent * (base.bit_length() - 1) > 63:
            raise ValueError(f"count literal {text!r} exceeds 2^63 - 1")
        value = base**exponent
    elif match.group(3) is not None:
        exponent = int(match.group(3))
        if base >= 1 and exponent > 19:
            raise ValueError(f"count literal {text!r} exceeds 2^63 - 1")
        value = base * 10**exponent
    else:
        value = base
    if value > MAX_COUNT:
        raise ValueError(f"count literal {text!r} exceeds 2^63 - 1")
    return value


def _count(text: str) -> int:
    try:
        return parse_comp_literal(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated int list: {exc}") from exc
    if not values:
        raise argparse.ArgumentTypeError("expected a non-empty comma-separated int list")
    return values


class _Parser(argparse.ArgumentParser):
    """argparse with the documented exit code for usage errors (1, not 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="blockwise",
        description=(
            "Chunked parallel-for benchmarking and cost-model block-size tuning."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sweep = sub.add_parser("sweep", help="run a block-size x thread-count sweep")
    sweep.add_argument("--config", required=True, help="sweep file (see README for the schema)")
    _topo_flags(sweep)
    sweep.add_argument("--out", default=None, help="output path (default: stdout)")
    _format_flag(sweep)
    sweep.add_argument("--seed", type=int, default=bench.DEFAULT_ARENA_SEED,
                       help="arena fill seed (default: %(default)s)")
    sweep.add_argument("--summary-out", default=None,
                       help="also write the best-block-per-thread-count summary here")
    _no_compile_flag(sweep)
    sweep.set_defaults(handler=_cmd_sweep)

    compare = sub.add_parser("compare", help="compare chunking strategies on a workload")
    compare.add_argument("--workload", required=True,
                         help="workload file (sweep schema; block_sizes unused)")
    _topo_flags(compare)
    compare.add_argument("--threads", type=int, default=None,
                         help="participant count (default: the file's first thread_counts entry)")
    compare.add_argument("--vary", default=None, metavar="FIELD=V1,V2,...",
                         help="sweep one workload field (read, write, or comp) over "
                              "count literals, one comparison row per value")
    compare.add_argument("--strategies", default="guided,costmodel",
                         help="comma list: guided, costmodel, fixed:<B> (default: %(default)s)")
    compare.add_argument("--weights", default="published",
                         help="'published' or a weights file for the cost model "
                              "(default: %(default)s)")
    compare.add_argument("--repetitions", type=int, default=None,
                         help="repetitions per cell (default: the workload file's value)")
    compare.add_argument("--out", default=None, help="output path (default: stdout)")
    _format_flag(compare)
    compare.add_argument("--seed", type=int, default=bench.DEFAULT_ARENA_SEED,
                         help="arena fill seed (default: %(default)s)")
    _no_compile_flag(compare)
    compare.set_defaults(handler=_cmd_compare)

    fit = sub.add_parser("fit", help="fit model weights to a training table")
    fit.add_argument("--data", required=True, help="training CSV with header G,T,R,W,C,B")
    fit.add_argument("--raw", action="store_true",
                     help="feature columns hold raw values (groups, threads, bytes, "
                          "bytes, count) to be normalized on load")
    fit.add_argument("--init", choices=("random", "published"), default="random",
                     help="initial weights (default: %(default)s)")
    fit.add_argument("--seed", type=int, default=7,
                     help="seed for --init random (default: %(default)s)")
    fit.add_argument("--step", type=float, default=1.0,
                     help="initial line-search step (default: %(default)s)")
    fit.add_argument("--epochs", type=int, default=50_000,
                     help="epoch budget (default: %(default)s)")
    fit.add_argument("--tol", type=float, default=0.0,
                     help="stop once the per-epoch loss drop falls below this "
                          "(default: %(default)s, disabled)")
    fit.add_argument("--out", default=None, help="weights file to write")
    fit.set_defaults(handler=_cmd_fit)

    predict = sub.add_parser("predict", help="predict the block size for a workload")
    predict.add_argument("--groups", type=int, required=True, help="core group count")
    predict.add_argument("--threads", type=int, required=True, help="participant count")
    predict.add_argument("--read", type=_count, required=True,
                         help="unit_read bytes (count literal, e.g. 1024 or 2^10)")
    predict.add_argument("--write", type=_count, required=True,
                         help="unit_write bytes (count literal)")
    predict.add_argument("--comp", type=_count, required=True,
                         help="unit_comp count (count literal, e.g. 2^60 or 1024^3)")
    predict.add_argument("--weights", default="published",
                         help="'published' or a weights file (default: %(default)s)")
    predict.add_argument("--cap", type=int, default=None,
                         help="clamp the prediction to this iteration count")
    predict.set_defaults(handler=_cmd_predict)

    topo = sub.add_parser("topo", help="show or write the machine topology")
    _topo_flags(topo)
    topo.add_argument("--out", default=None, help="write instead of printing")
    topo.set_defaults(handler=_cmd_topo)

    faabench = sub.add_parser("faabench", help="measure contended claim-counter latency")
    faabench.add_argument("--participants", type=_int_list, default=[1, 2, 4],
                          help="comma list of participant counts (default: 1,2,4)")
    faabench.add_argument("--claims", type=_count, default=bench.DEFAULT_FAA_CLAIMS,
                          help="total claims per measurement (default: %(default)s)")
    _topo_flags(faabench)
    faabench.add_argument("--out", default=None, help="output path (default: stdout)")
    _format_flag(faabench)
    faabench.set_defaults(handler=_cmd_faabench)

    return parser


def _topo_flags(parser) -> None:
    parser.add_argument("--topo", default=None,
                        help="topology file (default: detect the host)")
    parser.add_argument("--detect", action="store_true",
                        help="force host detection even when --topo is set")


def _format_flag(parser) -> None:
    parser.add_argument("--format", choices=("csv", "md", "json-lines"), default="csv",
                        help="output format (default: %(default)s)")


def _no_compile_flag(parser) -> None:
    parser.add_argument("--no-compile", action="store_true",
                        help="run the pure-Python unit task instead of the compiled kernel")


def _load_topology(args) -> Topology:
    if args.topo and not args.detect:
        return config.load_topology(args.topo)
    return config.detect_topology()


def _load_weights(source: str) -> costmodel.Weights:
    if source == "published":
        return costmodel.PUBLISHED
    return costmodel.load_weights(source)


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _cmd_sweep(args) -> int:
    spec = config.load_sweep(args.config)
    topo = _load_topology(args)
    try:
        results = bench.run_sweep(
            spec, topo, seed=args.seed, compiled=not args.no_compile,
        )
    except bench.SweepFailure as failure:
        # flush what completed, marked, then report the failure
        if failure.partial:
            _emit(
                bench.format_results_csv(failure.partial, failure_marker=failure.marker),
                args.out,
            )
        print(f"blockwise: sweep failed: {failure.marker}", file=sys.stderr)
        return 2
    if args.format == "csv":
        text = bench.format_results_csv(results)
    elif args.format == "md":
        text = bench.format_markdown(results)
    else:
        text = bench.format_json_lines(results)
    _emit(text, args.out)
    if args.summary_out is not None:
        _emit(bench.best_block_summary(results), args.summary_out)
    return 0


_VARY_FIELDS = {"read": "unit_read", "write": "unit_write", "comp": "unit_comp"}


def _cmd_compare(args) -> int:
    spec = config.load_sweep(args.workload)
    threads = args.threads if args.threads is not None else spec.thread_counts[0]
    topo = _load_topology(args).with_workers(threads)
    weights = _load_weights(args.weights)
    workloads = [spec.workload]
    if args.vary:
        field, _, raw_values = args.vary.partition("=")
        if field not in _VARY_FIELDS or not raw_values:
            raise ConfigError(
                f"--vary must look like read=64,256,... (fields: {sorted(_VARY_FIELDS)})"
            )
        values = [parse_comp_literal(v) for v in raw_values.split(",")]
        workloads = [
            replace(spec.workload, **{_VARY_FIELDS[field]: value}) for value in values
        ]
    strategies = [entry.strip() for entry in args.strategies.split(",") if entry.strip()]
    table = bench.compare_strategies(
        workloads,
        topo,
        strategies,
        repetitions=args.repetitions if args.repetitions is not None else spec.repetitions,
        warmups=spec.warmups,
        weights=weights,
        seed=args.seed,
        compiled=not args.no_compile,
    )
    if args.format == "csv":
        text = bench.format_comparison_csv(table)
    elif args.format == "md":
        text = bench.format_comparison_markdown(table)
    else:
        text = bench.format_comparison_json_lines(table)
    _emit(text, args.out)
    return 0


def _cmd_fit(args) -> int:
    data = costmodel.load_training_csv(args.data, raw=args.raw)
    if args.init == "published":
        init = costmodel.PUBLISHED
        seed = None
    else:
        init = costmodel.random_weights(args.seed)
        seed = args.seed
    fit_config = costmodel.FitConfig(
        step_size=args.step, max_epochs=args.epochs, tolerance=args.tol,
    )
    result = costmodel.fit(data, init, fit_config)
    if args.out is not None:
        costmodel.save_weights(
            result.weights, args.out,
            loss_value=result.loss, epochs=result.epochs, seed=seed,
        )
    print(f"final loss {result.loss:.6f} after {result.epochs} epochs")
    return 0


def _cmd_predict(args) -> int:
    weights = _load_weights(args.weights)
    spec = WorkloadSpec(
        unit_read=args.read, unit_write=args.write, unit_comp=args.comp,
        iterations=args.cap if args.cap is not None else config.DEFAULT_ITERATIONS,
    )
    features = costmodel.normalize(args.groups, args.threads, spec)
    print(costmodel.predict(weights, features, n_cap=args.cap))
    return 0


def _cmd_topo(args) -> int:
    topo = _load_topology(args)
    _emit(config.format_topology(topo), args.out)
    return 0


def _cmd_faabench(args) -> int:
    topo = _load_topology(args)
    workers = max(args.participants)
    rows = []
    with_pool = bench.ThreadPool(topo.with_workers(workers))
    try:
        for participants in args.participants:
            sample = bench.measure_faa_latency(with_pool, participants, args.claims)
            rows.append({
                "participants": sample.participants,
                "claims": sample.claims,
                "aggregate_l_ns": round(sample.aggregate_l_ns, 1),
                "p50_ns": sample.percentile(50),
                "p90_ns": sample.percentile(90),
                "p99_ns": sample.percentile(99),
            })
    finally:
        with_pool.close()
    _emit(_format_rows(rows, args.format), args.out)
    return 0


def _format_rows(rows: list[dict], fmt: str) -> str:
    import csv as _csv
    import io
    import json

    if fmt == "json-lines":
        return "".join(json.dumps(row) + "\n" for row in rows)
    if fmt == "csv":
        out = io.StringIO()
        writer = _csv.DictWriter(out, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
        return out.getvalue()
    headers = list(rows[0].keys())
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---:" for _ in headers) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(str(row[h]) for h in headers) + " |")
    return "\n".join(lines) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.handler(args)
    except (ConfigError, costmodel.SingularityError) as exc:
        print(f"blockwise: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"blockwise: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
