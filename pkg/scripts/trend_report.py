#!/usr/bin/env python3
"""Full block-size trend report on the host machine.

Sweeps a fixed workload over every block size in [1, 1024] for each thread
count, writes the per-repetition CSV plus a markdown median table, prints
the best block per thread count, and closes with a guided vs cost-model
comparison at each thread count.

Expect minutes of runtime on a laptop; trim --blocks or --reps to iterate.
"""
import argparse
import sys
import time
from pathlib import Path

from blockwise.bench import (
    best_block_summary,
    compare_strategies,
    format_comparison_markdown,
    format_markdown,
    run_sweep,
    write_results_csv,
)
from blockwise.config import SweepSpec, WorkloadSpec, detect_topology, load_topology
from blockwise.costmodel import PUBLISHED, load_weights


def int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--read", type=int, default=1024, help="unit_read bytes")
    parser.add_argument("--write", type=int, default=1024, help="unit_write bytes")
    parser.add_argument("--comp", type=int, default=1024, help="unit_comp count")
    parser.add_argument("--iterations", type=int, default=1024)
    parser.add_argument("--threads", type=int_list, default=[2, 4, 8],
                        help="comma list of thread counts")
    parser.add_argument("--max-block", type=int, default=1024,
                        help="sweep block sizes 1..MAX_BLOCK")
    parser.add_argument("--reps", type=int, default=9)
    parser.add_argument("--warmups", type=int, default=2)
    parser.add_argument("--topo", default=None, help="topology file (default: detect)")
    parser.add_argument("--weights", default=None, help="weights file (default: built-in)")
    parser.add_argument("--out", default="trend_report", help="output directory")
    args = parser.parse_args(argv)

    topo = load_topology(args.topo) if args.topo else detect_topology()
    weights = load_weights(args.weights) if args.weights else PUBLISHED
    workload = WorkloadSpec(
        unit_read=args.read, unit_write=args.write, unit_comp=args.comp,
        iterations=args.iterations,
    )
    spec = SweepSpec(
        workload=workload,
        block_sizes=tuple(range(1, args.max_block + 1)),
        thread_counts=tuple(sorted(args.threads)),
        repetitions=args.reps,
        warmups=args.warmups,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    cells = len(spec.block_sizes) * len(spec.thread_counts)
    print(f"sweeping {cells} cells x {args.reps} reps on {topo.group_count} "
          f"group(s), {len(topo.cores)} core(s)")
    started = time.perf_counter()
    results = run_sweep(spec, topo)
    print(f"sweep done in {time.perf_counter() - started:.0f}s")

    write_results_csv(results, out_dir / "sweep.csv")
    (out_dir / "medians.md").write_text(format_markdown(results), encoding="utf-8")
    summary = best_block_summary(results)
    (out_dir / "best_block.yaml").write_text(summary, encoding="utf-8")
    print(summary.rstrip())

    rows = []
    for threads in spec.thread_counts:
        table = compare_strategies(
            [workload],
            topo.with_workers(threads),
            ["guided", "costmodel"],
            repetitions=args.reps,
            warmups=args.warmups,
            weights=weights,
        )
        row = table.rows[0]
        guided_ns, costmodel_ns = row.medians_ns
        delta = (guided_ns - costmodel_ns) / guided_ns * 100.0
        rows.append(
            f"T={threads}: guided {guided_ns:.0f} ns, cost model "
            f"{costmodel_ns:.0f} ns (B={row.chosen_block}), delta {delta:+.1f}%"
        )
        (out_dir / f"compare_t{threads}.md").write_text(
            format_comparison_markdown(table), encoding="utf-8"
        )
    print("guided vs cost model (median e2e latency):")
    for line in rows:
        print(" ", line)
    print(f"artifacts in {out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
