"""Benchmark harness: timing, block-size sweeps, the fetch-and-add
microbenchmark, strategy comparison, aggregation, and table emitters.

Times are monotonic wall-clock nanoseconds.  Medians headline every table;
mins and means are kept alongside.  Latency trends are reported, never
asserted: they belong to the hardware, not to this library.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import statistics
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import yaml

from .config import SweepSpec, Topology, WorkloadSpec
from .costmodel import PUBLISHED, Weights, normalize, predict
from .executor import (
    NO_PIN_ENV,
    ChunkingStrategy,
    ClaimCounter,
    CostModelChoice,
    FixedBlock,
    Guided,
    RunStats,
    ThreadPool,
    parallel_for,
)
from .workload import UnitTask, init_arena, make_chunk_runner

log = logging.getLogger(__name__)

DEFAULT_ARENA_SEED = 0x5EED
DEFAULT_FAA_CLAIMS = 100_000

RESULTS_CSV_HEADER = [
    "groups", "threads", "unit_read", "unit_write", "unit_comp", "iterations",
    "strategy", "block_size", "rep", "elapsed_ns", "successful_claims",
    "terminal_claims",
]


@dataclass(frozen=True)
class SweepResult:
    """One (configuration, strategy) cell: per-repetition latencies plus the
    executor stats behind each repetition.  block_size is 0 for strategies
    that size chunks dynamically."""

    groups: int
    threads: int
    workload: WorkloadSpec
    strategy: str
    block_size: int
    elapsed_ns: tuple[int, ...]
    stats: tuple[RunStats, ...]

    def __post_init__(self):
        if not self.elapsed_ns:
            raise ValueError("a sweep result needs at least one repetition")
        if len(self.elapsed_ns) != len(self.stats):
            raise ValueError("elapsed_ns and stats differ in length")

    @property
    def repetitions(self) -> int:
        return len(self.elapsed_ns)

    @property
    def median_ns(self) -> float:
        return statistics.median(self.elapsed_ns)

    @property
    def min_ns(self) -> int:
        return min(self.elapsed_ns)

    @property
    def mean_ns(self) -> float:
        return statistics.fmean(self.elapsed_ns)


class SweepFailure(RuntimeError):
    """A sweep cell failed.  Carries the cells completed before the failure
    and a marker describing the failed cell, so partial results can still be
    flushed."""

    def __init__(self, marker: str, partial: list[SweepResult], cause: BaseException):
        super().__init__(marker)
        self.marker = marker
        self.partial = partial
        self.cause = cause


def measure_once(
    pool: ThreadPool,
    task: UnitTask,
    strategy: ChunkingStrategy,
    *,
    runner: Callable[[int, int], None] | None = None,
    n: int | None = None,
) -> tuple[int, RunStats]:
    """Wall-clock one parallel_for call over the task's iterations (arena
    setup excluded).  n overrides the iteration count, mainly to time empty
    ranges."""
    if runner is None:
        runner = make_chunk_runner(task)
    if n is None:
        n = task.spec.iterations
    stats = parallel_for(pool, None, n, strategy, chunk_task=runner)
    return stats.elapsed_ns, stats


def run_sweep(
    spec: SweepSpec,
    topo: Topology,
    *,
    seed: int = DEFAULT_ARENA_SEED,
    sink: Callable[[SweepResult], None] | None = None,
    compiled: bool = True,
) -> list[SweepResult]:
    """Measure every (thread_count, block_size) cell of the sweep, in that
    order: warmups discarded, repetitions recorded.

    A failing cell raises SweepFailure carrying everything measured so far;
    sink, when given, receives each completed cell as it lands.
    """
    arena = init_arena(spec.workload, seed)
    task = UnitTask.bind(spec.workload, arena)
    results: list[SweepResult] = []
    for threads in sorted(spec.thread_counts):
        with ThreadPool(topo.with_workers(threads)) as pool:
            runner = make_chunk_runner(task, compiled=compiled)
            for block in sorted(spec.block_sizes):
                strategy = FixedBlock(block)
                try:
                    for _ in range(spec.warmups):
                        measure_once(pool, task, strategy, runner=runner)
                    laps: list[int] = []
                    stats: list[RunStats] = []
                    for _ in range(spec.repetitions):
                        elapsed, run_stats = measure_once(pool, task, strategy, runner=runner)
                        laps.append(elapsed)
                        stats.append(run_stats)
                except Exception as exc:
                    raise SweepFailure(
                        f"failed at threads={threads} block_size={block}: {exc}",
                        results, exc,
                    ) from exc
                result = SweepResult(
                    groups=topo.group_count,
                    threads=threads,
                    workload=spec.workload,
                    strategy="fixed",
                    block_size=block,
                    elapsed_ns=tuple(laps),
                    stats=tuple(stats),
                )
                results.append(result)
                if sink is not None:
                    sink(result)
    return results


def best_block(results: Iterable[SweepResult]) -> dict[int, int]:
    """Per thread count, the block size with the lowest median latency; ties
    go to the smaller block.  Input order does not matter."""
    cells = list(results)
    if not cells:
        raise ValueError("no sweep results")
    if len({r.workload for r in cells}) > 1:
        raise ValueError("best_block expects results from a single workload")
    by_thread: dict[int, list[SweepResult]] = {}
    for cell in cells:
        by_thread.setdefault(cell.threads, []).append(cell)
    return {
        threads: min(group, key=lambda r: (r.median_ns, r.block_size)).block_size
        for threads, group in sorted(by_thread.items())
    }


def best_block_summary(results: Iterable[SweepResult]) -> str:
    """Structured-text summary of best_block per thread-count column."""
    return yaml.safe_dump({"best_block": best_block(results)}, sort_keys=True)


@dataclass(frozen=True)
class FaaLatencySample:
    """Contended claim-counter measurement: per-claim round trips plus the
    aggregate per-claim cost estimate (elapsed x participants / claims)."""

    participants: int
    claims: int
    elapsed_ns: int
    samples_ns: tuple[int, ...]

    @property
    def aggregate_l_ns(self) -> float:
        return self.elapsed_ns * self.participants / self.claims

    def percentile(self, q: float) -> float:
        return float(np.percentile(np.array(self.samples_ns), q))


def measure_faa_latency(
    pool: ThreadPool,
    participants: int,
    claims: int = DEFAULT_FAA_CLAIMS,
) -> FaaLatencySample:
    """All participants hammer one shared claim counter.

    Per-claim samples include the timer overhead around each claim; the
    aggregate estimate divides total busy time across claims instead.
    Participant counts beyond the topology's cores are allowed but logged:
    an oversubscribed box measures scheduler pressure, not the counter.
    """
    if participants < 1:
        raise ValueError(f"participants must be >= 1, got {participants}")
    if claims < 1:
        raise ValueError(f"claims must be >= 1, got {claims}")
    cores = pool.topology.cores
    if participants > len(cores):
        log.warning(
            "faa benchmark oversubscribed: %d participants on %d cores",
            participants, len(cores),
        )
    counter = ClaimCounter()
    shares = [
        claims // participants + (1 if k < claims % participants else 0)
        for k in range(participants)
    ]
    outputs = [np.empty(share, dtype=np.int64) for share in shares]
    starts = [0] * participants
    ends = [0] * participants
    barrier = threading.Barrier(participants)

    def hammer(k: int) -> None:
        if pool.topology.pinning:
            _pin_hammer(cores[k % len(cores)])
        out = outputs[k]
        clock = time.perf_counter_ns
        barrier.wait()
        begin = clock()
        for idx in range(out.size):
            before = clock()
            counter.claim(1)
            out[idx] = clock() - before
        ends[k] = clock()
        starts[k] = begin

    threads = [
        threading.Thread(target=hammer, args=(k,), daemon=True)
        for k in range(1, participants)
    ]
    for thread in threads:
        thread.start()
    hammer(0)
    for thread in threads:
        thread.join()
    samples = np.concatenate(outputs)
    return FaaLatencySample(
        participants=participants,
        claims=claims,
        elapsed_ns=int(max(ends) - min(starts)),
        samples_ns=tuple(int(v) for v in samples),
    )


_pin_warned = False


def _pin_hammer(core: int) -> None:
    global _pin_warned
    if os.environ.get(NO_PIN_ENV) == "1":
        return
    try:
        os.sched_setaffinity(0, {core})
    except (AttributeError, OSError) as exc:
        if not _pin_warned:
            _pin_warned = True
            log.warning("faa benchmark pinning unavailable: %s", exc)


@dataclass(frozen=True)
class CostEstimate:
    """Evaluated latency model: ceil(N/B) claim round-trips plus the work
    spread across T participants."""

    n: int
    block_size: int
    l_ns: float
    work: float
    threads: int
    total: float


def estimate_cost(n: int, block_size: int, l: float, work: float, threads: int) -> CostEstimate:
    if n < 1 or block_size < 1 or threads < 1:
        raise ValueError("n, block_size, and threads must be >= 1")
    if l <= 0 or work <= 0:
        raise ValueError("l and work must be positive")
    chunks = (n + block_size - 1) // block_size
    total = chunks * l + (n * work) / threads
    return CostEstimate(
        n=n, block_size=block_size, l_ns=float(l), work=float(work),
        threads=threads, total=float(total),
    )


def amdahl_speedup(p: float, t: int) -> float:
    """1 / ((1-P) + P/T): the ideal-speedup reference used in reports."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    return 1.0 / ((1.0 - p) + p / t)


@dataclass(frozen=True)
class ComparisonRow:
    workload: WorkloadSpec
    medians_ns: tuple[float, ...]
    chosen_block: int | None


@dataclass(frozen=True)
class ComparisonTable:
    """One row per workload variant; medians_ns aligns with labels.
    chosen_block echoes the cost model's block size where one was used."""

    labels: tuple[str, ...]
    threads: int
    rows: tuple[ComparisonRow, ...]


def cost_model_strategy(weights: Weights, topo: Topology, spec: WorkloadSpec) -> CostModelChoice:
    """Resolve the model's block size for a workload on a topology."""
    features = normalize(topo.group_count, topo.worker_count, spec)
    return CostModelChoice(predict(weights, features, n_cap=spec.iterations))


StrategySpec = ChunkingStrategy | str


def compare_strategies(
    workloads: Sequence[WorkloadSpec],
    topo: Topology,
    strategies: Sequence[StrategySpec],
    *,
    repetitions: int = 9,
    warmups: int = 2,
    weights: Weights = PUBLISHED,
    seed: int = DEFAULT_ARENA_SEED,
    compiled: bool = True,
) -> ComparisonTable:
    """Median latency of each strategy on each workload variant, all at the
    topology's participant count.

    A strategy is a concrete ChunkingStrategy, or the string "costmodel" /
    "guided" resolved here ("costmodel" per workload from the weights).
    """
    if len(strategies) < 2:
        raise ValueError("compare_strategies needs at least two strategies")
    if not workloads:
        raise ValueError("compare_strategies needs at least one workload")
    labels = tuple(strategy_label(s) for s in strategies)
    rows: list[ComparisonRow] = []
    with ThreadPool(topo) as pool:
        for workload in workloads:
            arena = init_arena(workload, seed)
            task = UnitTask.bind(workload, arena)
            runner = make_chunk_runner(task, compiled=compiled)
            medians: list[float] = []
            chosen: int | None = None
            for entry in strategies:
                strategy = _resolve_spec(entry, weights, topo, workload)
                if isinstance(strategy, CostModelChoice):
                    chosen = strategy.block_size
                for _ in range(warmups):
                    measure_once(pool, task, strategy, runner=runner)
                laps = [
                    measure_once(pool, task, strategy, runner=runner)[0]
                    for _ in range(repetitions)
                ]
                medians.append(statistics.median(laps))
            rows.append(ComparisonRow(workload, tuple(medians), chosen))
    return ComparisonTable(labels=labels, threads=topo.worker_count, rows=tuple(rows))


def _resolve_spec(
    entry: StrategySpec, weights: Weights, topo: Topology, workload: WorkloadSpec
) -> ChunkingStrategy:
    if isinstance(entry, str):
        if entry == "guided":
            return Guided()
        if entry == "costmodel":
            return cost_model_strategy(weights, topo, workload)
        if entry.startswith("fixed:"):
            return FixedBlock(int(entry.split(":", 1)[1]))
        raise ValueError(f"unknown strategy spec {entry!r}")
    return entry


def strategy_label(entry: StrategySpec) -> str:
    if isinstance(entry, str):
        return entry
    if isinstance(entry, FixedBlock):
        return f"fixed:{entry.block_size}"
    if isinstance(entry, Guided):
        return "guided"
    if isinstance(entry, CostModelChoice):
        return "costmodel"
    raise TypeError(f"unknown strategy: {entry!r}")


# --- emitters ---------------------------------------------------------------


def results_rows(results: Iterable[SweepResult]) -> list[dict]:
    """Flatten sweep results to one dict per repetition (the CSV schema)."""
    rows = []
    for result in results:
        for rep, (elapsed, stats) in enumerate(zip(result.elapsed_ns, result.stats)):
            rows.append({
                "groups": result.groups,
                "threads": result.threads,
                "unit_read": result.workload.unit_read,
                "unit_write": result.workload.unit_write,
                "unit_comp": result.workload.unit_comp,
                "iterations": result.workload.iterations,
                "strategy": result.strategy,
                "block_size": result.block_size,
                "rep": rep,
                "elapsed_ns": elapsed,
                "successful_claims": stats.successful_claims,
                "terminal_claims": stats.terminal_claims,
            })
    return rows


def format_results_csv(results: Iterable[SweepResult], *, failure_marker: str | None = None) -> str:
    out = io.StringIO()
    write_results_csv(results, out, failure_marker=failure_marker)
    return out.getvalue()


def write_results_csv(
    results: Iterable[SweepResult],
    out,
    *,
    failure_marker: str | None = None,
) -> None:
    """Write the per-repetition CSV; out is a path or a text file object.
    failure_marker, when set, lands as a trailing comment line so partial
    sweeps stay distinguishable from complete ones."""
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_results_csv(results, fh, failure_marker=failure_marker)
        return
    writer = csv.DictWriter(out, fieldnames=RESULTS_CSV_HEADER)
    writer.writeheader()
    for row in results_rows(results):
        writer.writerow(row)
    if failure_marker is not None:
        out.write(f"# {failure_marker}\n")


_INT_COLUMNS = {
    "groups", "threads", "unit_read", "unit_write", "unit_comp", "iterations",
    "block_size", "rep", "elapsed_ns", "successful_claims", "terminal_claims",
}


def read_results_csv(source) -> list[dict]:
    """Parse a results CSV back to typed per-repetition rows, skipping any
    comment (failure marker) lines."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return read_results_csv(fh)
    lines = [line for line in source if not line.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames != RESULTS_CSV_HEADER:
        raise ValueError(
            f"unexpected results header {reader.fieldnames}, want {RESULTS_CSV_HEADER}"
        )
    rows = []
    for row in reader:
        rows.append({
            key: (int(value) if key in _INT_COLUMNS else value)
            for key, value in row.items()
        })
    return rows


def _format_ns(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.1f}"


def format_markdown(results: Iterable[SweepResult]) -> str:
    """Median table, block-size rows x thread-count columns, the lowest cell
    per column bolded."""
    cells = list(results)
    if not cells:
        raise ValueError("no sweep results")
    if any(r.strategy != "fixed" for r in cells):
        raise ValueError("the markdown table expects a fixed-block sweep")
    threads = sorted({r.threads for r in cells})
    blocks = sorted({r.block_size for r in cells})
    medians = {(r.threads, r.block_size): r.median_ns for r in cells}
    best = {
        t: min(
            (b for b in blocks if (t, b) in medians),
            key=lambda b: (medians[(t, b)], b),
        )
        for t in threads
    }
    lines = [
        "| block size | " + " | ".join(f"{t} threads" for t in threads) + " |",
        "| ---: | " + " | ".join("---:" for _ in threads) + " |",
    ]
    for block in blocks:
        row = [str(block)]
        for t in threads:
            if (t, block) not in medians:
                row.append("")
                continue
            text = _format_ns(medians[(t, block)])
            row.append(f"**{text}**" if best[t] == block else text)
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def format_json_lines(results: Iterable[SweepResult]) -> str:
    return "".join(json.dumps(row) + "\n" for row in results_rows(results))


def comparison_rows(table: ComparisonTable) -> list[dict]:
    rows = []
    for row in table.rows:
        record: dict = {
            "unit_read": row.workload.unit_read,
            "unit_write": row.workload.unit_write,
            "unit_comp": row.workload.unit_comp,
            "iterations": row.workload.iterations,
            "threads": table.threads,
        }
        for label, median in zip(table.labels, row.medians_ns):
            record[f"{label}_median_ns"] = median
        record["chosen_block"] = row.chosen_block
        rows.append(record)
    return rows


def format_comparison_csv(table: ComparisonTable) -> str:
    rows = comparison_rows(table)
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def format_comparison_markdown(table: ComparisonTable) -> str:
    headers = ["workload (R/W/C)"] + [f"{label} median ns" for label in table.labels]
    headers.append("chosen block")
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---:" for _ in headers) + " |",
    ]
    for row in table.rows:
        w = row.workload
        cells = [f"{w.unit_read}/{w.unit_write}/{w.unit_comp}"]
        cells += [_format_ns(m) for m in row.medians_ns]
        cells.append("" if row.chosen_block is None else str(row.chosen_block))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def format_comparison_json_lines(table: ComparisonTable) -> str:
    return "".join(json.dumps(row) + "\n" for row in comparison_rows(table))
