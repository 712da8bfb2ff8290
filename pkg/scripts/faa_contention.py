#!/usr/bin/env python3
"""Contended claim-counter latency across participant counts.

Reports the aggregate per-claim cost (busy time x participants / claims)
and sample percentiles; the aggregate is the L that estimate_cost consumes.
"""
import argparse
import sys

from blockwise.bench import estimate_cost, measure_faa_latency
from blockwise.config import detect_topology, load_topology
from blockwise.executor import ThreadPool


def int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--participants", type=int_list, default=[1, 2, 4, 8],
                        help="comma list of participant counts")
    parser.add_argument("--claims", type=int, default=100_000,
                        help="total claims per measurement")
    parser.add_argument("--topo", default=None, help="topology file (default: detect)")
    parser.add_argument("--example-n", type=int, default=1024,
                        help="N for the closing cost-curve illustration")
    args = parser.parse_args(argv)

    topo = load_topology(args.topo) if args.topo else detect_topology()
    workers = max(args.participants)
    print(f"{'P':>4} {'aggregate L (ns)':>18} {'p50':>8} {'p90':>8} {'p99':>8}")
    aggregate = {}
    with ThreadPool(topo.with_workers(workers)) as pool:
        for participants in sorted(args.participants):
            sample = measure_faa_latency(pool, participants, args.claims)
            aggregate[participants] = sample.aggregate_l_ns
            print(
                f"{participants:>4} {sample.aggregate_l_ns:>18.1f} "
                f"{sample.percentile(50):>8.0f} {sample.percentile(90):>8.0f} "
                f"{sample.percentile(99):>8.0f}"
            )

    # how the measured L moves the analytic block-size curve
    top = max(aggregate)
    l = aggregate[top]
    print(f"\ncost curve for N={args.example_n}, work=1, T={top}, L={l:.0f} ns:")
    for block in (1, 4, 16, 64, 256, 1024):
        if block > args.example_n:
            break
        est = estimate_cost(args.example_n, block, l, 1.0, top)
        print(f"  B={block:>5}: {est.total:>12.0f} ns")
    return 0


if __name__ == "__main__":
    sys.exit(main())
