"""Thread pool and the counter-chunked parallel_for with pluggable block-size
strategies.

Worker threads and the calling thread all run the same claim loop: grab the
next chunk of iterations from a shared counter, run it, repeat until the
counter passes N.  The block size per claim comes from the strategy: a fixed
value, the guided rule (a fraction of the remaining work), or a cost-model
prediction resolved before the run starts.
"""
from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass

from .config import Topology

log = logging.getLogger(__name__)

# Set to 1 to skip core pinning even for topologies that request it.
NO_PIN_ENV = "BLOCKWISE_NO_PIN"


class PoolClosedError(RuntimeError):
    """parallel_for called on a pool after close()."""


@dataclass(frozen=True)
class FixedBlock:
    """Claim exactly block_size iterations per fetch-and-add."""

    block_size: int

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")


@dataclass(frozen=True)
class Guided:
    """Claim a 0.5/participants fraction of the remaining work, falling to
    single iterations near the end.  participants defaults to the pool's
    participant count."""

    participants: int | None = None

    def __post_init__(self):
        if self.participants is not None and self.participants < 1:
            raise ValueError(f"participants must be >= 1, got {self.participants}")


@dataclass(frozen=True)
class CostModelChoice:
    """Fixed block size chosen by the cost model; parallel_for clamps it to
    [1, N] once N is known."""

    block_size: int

    def __post_init__(self):
        if self.block_size < 1:
            raise ValueError(f"block_size must be >= 1, got {self.block_size}")


ChunkingStrategy = FixedBlock | Guided | CostModelChoice


def next_chunk_guided(remaining: int, participants: int) -> int:
    """Guided chunk size: floor(0.5/participants x remaining), dropping to 1
    once fewer than 4 x participants iterations remain, 0 when exhausted."""
    if participants < 1:
        raise ValueError(f"participants must be >= 1, got {participants}")
    if remaining <= 0:
        return 0
    if remaining < 4 * participants:
        return 1
    return max(1, remaining // (2 * participants))


class ClaimCounter:
    """Shared claim counter advanced only by fetch-and-add style claims.

    CPython offers no true atomic integer, so a mutex guards the counter;
    the visible contract is the same: monotone, and every claim returns a
    unique previous value.
    """

    __slots__ = ("_lock", "_value")

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def claim(self, block: int) -> int:
        """Advance by block; returns the previous value (the chunk's begin)."""
        if block < 1:
            raise ValueError(f"block must be >= 1, got {block}")
        with self._lock:
            begin = self._value
            self._value = begin + block
            return begin

    def claim_guided(self, n: int, participants: int) -> tuple[int, int]:
        """Size a guided chunk from the exact remaining work and claim it in
        one step.  Returns (begin, block); block == 0 once work is exhausted.

        Sizing under the counter lock keeps the emitted chunk sizes
        non-increasing: no stale remaining-work reads.
        """
        with self._lock:
            begin = self._value
            block = next_chunk_guided(n - begin, participants)
            if block:
                self._value = begin + block
            return begin, block

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


@dataclass(frozen=True)
class RunStats:
    """Per-call instrumentation: how many claims landed inside [0, N)
    (successful) and how many landed past the end (terminal, exactly one per
    participant), plus the per-participant iteration counts and wall time."""

    successful_claims: int
    terminal_claims: int
    per_participant_iterations: tuple[int, ...]
    elapsed_ns: int


class _Batch:
    """One parallel_for call's shared state."""

    __slots__ = (
        "n", "counter", "runner", "fixed_block", "guided_participants",
        "iters", "ok_claims", "terminals", "pending", "lock", "done",
        "failure", "failed",
    )

    def __init__(self, participants, n, runner, fixed_block, guided_participants):
        self.n = n
        self.counter = ClaimCounter()
        self.runner = runner
        self.fixed_block = fixed_block
        self.guided_participants = guided_participants
        self.iters = [0] * participants
        self.ok_claims = [0] * participants
        self.terminals = [0] * participants
        self.pending = participants
        self.lock = threading.Lock()
        self.done = threading.Event()
        self.failure: BaseException | None = None
        self.failed = False

    def run_participant(self, slot: int) -> None:
        n = self.n
        counter = self.counter
        runner = self.runner
        executed = 0
        claims = 0
        try:
            if self.fixed_block is None:
                participants = self.guided_participants
                while True:
                    begin, block = counter.claim_guided(n, participants)
                    if block == 0:
                        break
                    claims += 1
                    if not self.failed:
                        runner(begin, begin + block)
                        executed += block
            else:
                block = self.fixed_block
                while True:
                    begin = counter.claim(block)
                    if begin >= n:
                        break
                    claims += 1
                    if not self.failed:
                        end = min(n, begin + block)
                        runner(begin, end)
                        executed += end - begin
        except BaseException as exc:  # noqa: BLE001 - must quiesce peers first
            self._record_failure(exc)
        finally:
            self.iters[slot] = executed
            self.ok_claims[slot] = claims
            self.terminals[slot] = 1
            with self.lock:
                self.pending -= 1
                last = self.pending == 0
            if last:
                self.done.set()

    def _record_failure(self, exc: BaseException) -> None:
        with self.lock:
            if self.failure is None:
                self.failure = exc
            self.failed = True
        # Drive the counter past n: peers claim their next chunk, see it land
        # beyond the end (or see no work remaining), and quiesce.
        self.counter.claim(max(1, self.n))


class ThreadPool:
    """worker_count - 1 pool threads plus the calling thread as participant
    slot 0.  parallel_for calls on one pool are serialized.

    Workers idle on a condition variable between calls; spin=True makes them
    busy-poll instead, trading CPU for dispatch latency on dedicated cores.
    """

    def __init__(self, topology: Topology, *, spin: bool = False):
        self.topology = topology
        self._spin = spin
        self._cv = threading.Condition()
        self._generation = 0
        self._batch: _Batch | None = None
        self._closed = False
        self._call_lock = threading.Lock()
        self._pin_plan = self._make_pin_plan(topology)
        self._pin_warned = False
        self._caller_affinity = self._pin(0)
        self._threads = [
            threading.Thread(
                target=self._worker, args=(slot,), daemon=True,
                name=f"blockwise-worker-{slot}",
            )
            for slot in range(1, topology.worker_count)
        ]
        for thread in self._threads:
            thread.start()

    @property
    def participant_count(self) -> int:
        return self.topology.worker_count

    @property
    def closed(self) -> bool:
        return self._closed

    def __enter__(self) -> ThreadPool:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        """Stop the pool threads; no thread holds a pending task afterwards."""
        with self._call_lock:
            if self._closed:
                return
            with self._cv:
                self._closed = True
                self._cv.notify_all()
            for thread in self._threads:
                thread.join()
            if self._caller_affinity is not None:
                try:
                    os.sched_setaffinity(0, self._caller_affinity)
                except OSError:
                    pass

    @staticmethod
    def _make_pin_plan(topology: Topology) -> tuple[int, ...] | None:
        if not topology.pinning or os.environ.get(NO_PIN_ENV) == "1":
            return None
        cores = topology.cores
        return tuple(cores[slot % len(cores)] for slot in range(topology.worker_count))

    def _pin(self, slot: int):
        """Best-effort: pin the calling thread to its planned core.  Returns
        the previous affinity for slot 0 so close() can restore the caller."""
        if self._pin_plan is None:
            return None
        previous = None
        try:
            if slot == 0:
                previous = os.sched_getaffinity(0)
            os.sched_setaffinity(0, {self._pin_plan[slot]})
        except (AttributeError, OSError) as exc:
            if not self._pin_warned:
                self._pin_warned = True
                log.warning("core pinning unavailable, continuing unpinned: %s", exc)
            return None
        return previous

    def _worker(self, slot: int) -> None:
        self._pin(slot)
        generation = 0
        while True:
            if self._spin:
                while self._generation == generation and not self._closed:
                    pass
            with self._cv:
                while self._generation == generation and not self._closed:
                    self._cv.wait()
                if self._generation == generation:
                    return  # closed with no new batch
                generation = self._generation
                batch = self._batch
            batch.run_participant(slot)

    def _run(self, task, n: int, strategy: ChunkingStrategy, chunk_task) -> RunStats:
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        if (task is None) == (chunk_task is None):
            raise ValueError("provide exactly one of task and chunk_task")
        if chunk_task is None:
            def runner(begin: int, end: int, _task=task) -> None:
                for i in range(begin, end):
                    _task(i)
        else:
            runner = chunk_task
        fixed_block, guided_participants = self._resolve(strategy, n)
        with self._call_lock:
            if self._closed:
                raise PoolClosedError("parallel_for on a closed pool")
            batch = _Batch(
                self.participant_count, n, runner, fixed_block, guided_participants,
            )
            start = time.perf_counter_ns()
            with self._cv:
                self._generation += 1
                self._batch = batch
                self._cv.notify_all()
            batch.run_participant(0)
            batch.done.wait()
            elapsed = time.perf_counter_ns() - start
            self._batch = None
        if batch.failure is not None:
            raise batch.failure
        return RunStats(
            successful_claims=sum(batch.ok_claims),
            terminal_claims=sum(batch.terminals),
            per_participant_iterations=tuple(batch.iters),
            elapsed_ns=elapsed,
        )

    def _resolve(self, strategy: ChunkingStrategy, n: int):
        """Returns (fixed_block, guided_participants), exactly one non-None."""
        if isinstance(strategy, FixedBlock):
            return strategy.block_size, None
        if isinstance(strategy, Guided):
            return None, strategy.participants or self.participant_count
        if isinstance(strategy, CostModelChoice):
            return (min(strategy.block_size, n) if n > 0 else 1), None
        raise TypeError(f"unknown chunking strategy: {strategy!r}")


def claim(counter: ClaimCounter, block: int) -> int:
    """Fetch-and-add on the shared counter; returns the chunk's begin index."""
    return counter.claim(block)


def parallel_for(
    pool: ThreadPool,
    task,
    n: int,
    strategy: ChunkingStrategy,
    *,
    chunk_task=None,
) -> RunStats:
    """Invoke task(i) exactly once for every i in [0, n) across the pool.

    All participants (pool threads plus the caller) claim chunks from a
    fresh shared counter until it passes n.  Returns when every side effect
    of every iteration is visible to the caller.  A task failure lets all
    participants quiesce, then propagates; chunks claimed after the failure
    are skipped.

    chunk_task, mutually exclusive with task, receives (begin, end) and must
    run those iterations itself; used to push whole chunks into compiled
    code.
    """
    return pool._run(task, n, strategy, chunk_task)
