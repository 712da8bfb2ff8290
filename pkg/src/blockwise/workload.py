"""The configurable unit task and the memory arenas it reads and writes.

Each parallel_for iteration i owns a private slice of two flat byte
buffers: it reads iteration i's read region, performs a fixed amount of
byte arithmetic per byte read, and fills iteration i's write region.
Regions of distinct iterations never overlap, so any interleaving of
iterations produces the same output as running them sequentially.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import WorkloadSpec

# 64-bit linear congruential generator, Knuth's MMIX constants.  Used only
# as a deterministic arena fill; no statistical quality is claimed.
LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1

DEFAULT_MEMORY_CAP = 1 << 30  # bytes per buffer dimension product
DEFAULT_COMP_CAP = 1 << 16  # per_read_computation ceiling; true count kept

# increment-mod-256 as a table so the step stays value-dependent and cannot
# be folded into `(v + p) % 256` by any compiled path
_STEP_TABLE = np.empty(256, dtype=np.uint8)
_STEP_TABLE[:255] = np.arange(1, 256, dtype=np.uint8)
_STEP_TABLE[255] = 0
_STEP_BYTES = bytes(list(range(1, 256)) + [0])


class ArenaSizeError(ValueError):
    """Requested arena would exceed the configured memory cap."""


class Arena:
    """Flat read/write byte buffers with disjoint per-iteration regions."""

    def __init__(self, spec: WorkloadSpec, read_buffer, write_buffer):
        self.spec = spec
        self.read_buffer = read_buffer
        # bytearray slices copy; a memoryview window keeps stores in place
        self._write_window = (
            memoryview(write_buffer)
            if isinstance(write_buffer, (bytearray, bytes))
            else write_buffer
        )
        self.write_buffer = write_buffer

    def read_region(self, iteration: int):
        r = self.spec.unit_read
        return self.read_buffer[iteration * r:(iteration + 1) * r]

    def write_region(self, iteration: int):
        w = self.spec.unit_write
        return self._write_window[iteration * w:(iteration + 1) * w]


class DebugArena(Arena):
    """List-backed arena whose regions count every byte read and stored."""

    def __init__(self, spec: WorkloadSpec, seed: int):
        read = list(lcg_bytes(spec.iterations * spec.unit_read, seed))
        write = [0] * (spec.iterations * spec.unit_write)
        super().__init__(spec, read, write)
        self.reads = 0
        self.stores = 0

    def read_region(self, iteration: int):
        return _CountingReads(super().read_region(iteration), self)

    def write_region(self, iteration: int):
        r = self.spec.unit_write
        return _CountingStores(self.write_buffer, iteration * r, self)


class _CountingReads:
    def __init__(self, data, arena):
        self._data = data
        self._arena = arena

    def __getitem__(self, k):
        self._arena.reads += 1
        return self._data[k]


class _CountingStores:
    def __init__(self, buffer, base, arena):
        self._buffer = buffer
        self._base = base
        self._arena = arena

    def __setitem__(self, k, value):
        self._arena.stores += 1
        self._buffer[self._base + k] = value


def lcg_bytes(n: int, seed: int) -> bytes:
    """First n bytes of the LCG state stream for a seed (little-endian words)."""
    return _lcg_fill(n, seed).tobytes()


def _lcg_fill(n_bytes: int, seed: int) -> np.ndarray:
    """Vectorized LCG stream: byte k of the output is byte k%8 of state
    1 + k//8, where state_{j+1} = (a*state_j + c) mod 2^64 from state_0 = seed.
    """
    if n_bytes == 0:
        return np.empty(0, dtype=np.uint8)
    n_words = (n_bytes + 7) // 8
    a = np.uint64(LCG_MULTIPLIER)
    # powers[j] = a^(j+1) mod 2^64; uint64 arithmetic wraps like the scalar loop
    powers = np.full(n_words, a, dtype=np.uint64)
    np.cumprod(powers, out=powers)
    # geo[j] = 1 + a + ... + a^j mod 2^64
    geo = np.empty(n_words, dtype=np.uint64)
    geo[0] = 1
    np.cumsum(powers[:-1], out=geo[1:])
    geo[1:] += np.uint64(1)
    states = powers * np.uint64(seed & _MASK64) + np.uint64(LCG_INCREMENT) * geo
    return states.astype("<u8").view(np.uint8)[:n_bytes].copy()


def init_arena(
    spec: WorkloadSpec,
    seed: int,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
) -> Arena:
    """Allocate the arena for a workload: read buffer filled deterministically
    from the seed by the LCG above, write buffer zeroed."""
    footprint = spec.iterations * max(spec.unit_read, spec.unit_write)
    if footprint > memory_cap:
        raise ArenaSizeError(
            f"iterations x max(unit_read, unit_write) = {spec.iterations} x "
            f"{max(spec.unit_read, spec.unit_write)} = {footprint} bytes "
            f"exceeds the memory cap of {memory_cap} bytes"
        )
    read = np.frombuffer(lcg_bytes(spec.iterations * spec.unit_read, seed), dtype=np.uint8).copy()
    write = np.zeros(spec.iterations * spec.unit_write, dtype=np.uint8)
    return Arena(spec, read, write)


@dataclass(frozen=True)
class UnitTask:
    """A workload bound to an arena, with the per-byte computation count
    resolved (and capped: the effective count is what runs, the true count
    is kept for reporting)."""

    spec: WorkloadSpec
    arena: Arena
    per_read_computation: int
    per_read_computation_true: int

    @classmethod
    def bind(cls, spec: WorkloadSpec, arena: Arena, *, comp_cap: int = DEFAULT_COMP_CAP) -> UnitTask:
        true_count = spec.unit_comp // spec.unit_read if spec.unit_read > 0 else 0
        return cls(
            spec=spec,
            arena=arena,
            per_read_computation=min(true_count, comp_cap),
            per_read_computation_true=true_count,
        )


def run_unit_task(task: UnitTask, iteration: int) -> None:
    """Run one iteration: read each byte of the iteration's read region,
    advance it per_read_computation times (mod 256), store it while the
    write region has room, then pad the rest of the region with the final
    value."""
    spec = task.spec
    unit_read = spec.unit_read
    unit_write = spec.unit_write
    if unit_read == 0:
        return  # no-op task; spec validation guarantees unit_write == 0
    read_at = task.arena.read_region(iteration)
    write_at = task.arena.write_region(iteration)
    steps = _STEP_BYTES
    per_read = task.per_read_computation
    write_count = 0
    integer = 0
    for i in range(unit_read):
        integer = read_at[i]
        for _ in range(per_read):
            integer = steps[integer]
        if write_count < unit_write:
            write_at[write_count] = integer
            write_count += 1
    while write_count < unit_write:
        write_at[write_count] = integer
        write_count += 1


def oracle_write_region(read_region: bytes, unit_write: int, per_read: int) -> bytes:
    """Closed-form expectation for one iteration's write region, independent
    of the loop above: byte k is read_region[k] + per_read (mod 256) while
    both regions have byte k, then the final read byte + per_read repeats."""
    unit_read = len(read_region)
    if unit_write == 0:
        return b""
    out = [(read_region[k] + per_read) % 256 for k in range(min(unit_read, unit_write))]
    pad = (read_region[unit_read - 1] + per_read) % 256
    out.extend([pad] * (unit_write - len(out)))
    return bytes(out)


def effective_work(spec: WorkloadSpec) -> int:
    """Per-iteration work weight: unit_read + unit_write + unit_comp.
    A block of B iterations carries B times this."""
    return spec.unit_read + spec.unit_write + spec.unit_comp


def make_chunk_runner(task: UnitTask, *, compiled: bool = True):
    """Return run(begin, end) executing iterations [begin, end) of the task.

    With a numpy-backed arena the compiled batch kernel is used (identical
    byte semantics, verified in tests); otherwise, or when compiled=False,
    a plain per-iteration loop.
    """
    if (
        compiled
        and isinstance(task.arena.read_buffer, np.ndarray)
        and isinstance(task.arena.write_buffer, np.ndarray)
    ):
        kernel = _load_kernel()
        if kernel is not None:
            read_buf = task.arena.read_buffer
            write_buf = task.arena.write_buffer
            unit_read = task.spec.unit_read
            unit_write = task.spec.unit_write
            per_read = task.per_read_computation

            def run_compiled(begin: int, end: int) -> None:
                kernel(read_buf, write_buf, unit_read, unit_write, per_read,
                       _STEP_TABLE, begin, end)

            return run_compiled

    def run_plain(begin: int, end: int) -> None:
        for i in range(begin, end):
            run_unit_task(task, i)

    return run_plain


_KERNEL = None
_KERNEL_FAILED = False


def _load_kernel():
    global _KERNEL, _KERNEL_FAILED
    if _KERNEL is None and not _KERNEL_FAILED:
        try:
            from ._kernels import run_chunk
        except ImportError:
            _KERNEL_FAILED = True
        else:
            _KERNEL = run_chunk
    return _KERNEL
