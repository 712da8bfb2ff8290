"""Unit task semantics, arena construction, and the compiled batch kernel."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockwise.config import ConfigError, WorkloadSpec
from blockwise.workload import (
    DEFAULT_COMP_CAP,
    Arena,
    ArenaSizeError,
    DebugArena,
    UnitTask,
    effective_work,
    init_arena,
    lcg_bytes,
    make_chunk_runner,
    oracle_write_region,
    run_unit_task,
)


def run_on_bytes(read_bytes, unit_write, unit_comp, iterations=1):
    """Run the task on a caller-supplied read buffer; return the write buffer."""
    unit_read = len(read_bytes) // iterations
    spec = WorkloadSpec(
        unit_read=unit_read,
        unit_write=unit_write,
        unit_comp=unit_comp,
        iterations=iterations,
    )
    arena = Arena(spec, bytearray(read_bytes), bytearray(iterations * unit_write))
    task = UnitTask.bind(spec, arena)
    for i in range(iterations):
        run_unit_task(task, i)
    return task, bytes(arena.write_buffer)


class TestRunUnitTask:
    def test_hand_trace_truncating_write(self):
        # per_read = 8 // 4 = 2; writes stop after unit_write bytes
        task, out = run_on_bytes([1, 2, 3, 4], unit_write=2, unit_comp=8)
        assert task.per_read_computation == 2
        assert out == bytes([3, 4])

    def test_hand_trace_padded_write(self):
        # per_read = 2 // 2 = 1; the final value pads the remainder
        _, out = run_on_bytes([10, 20], unit_write=4, unit_comp=2)
        assert out == bytes([11, 21, 21, 21])

    def test_increment_wraps_mod_256(self):
        _, out = run_on_bytes([255], unit_write=1, unit_comp=3)
        assert out == bytes([(255 + 3) % 256])

    def test_write_zero_touches_nothing(self):
        _, out = run_on_bytes([5, 6], unit_write=0, unit_comp=4)
        assert out == b""

    def test_pure_compute_spec_is_noop(self):
        spec = WorkloadSpec(unit_read=0, unit_write=0, unit_comp=50, iterations=1)
        arena = Arena(spec, bytearray(), bytearray())
        task = UnitTask.bind(spec, arena)
        run_unit_task(task, 0)
        assert task.per_read_computation == 0

    def test_iterations_use_disjoint_regions(self):
        _, out = run_on_bytes([1, 2, 3, 4], unit_write=2, unit_comp=4, iterations=2)
        # per_read = 4 // 2 = 2, regions [1,2] and [3,4]
        assert out == bytes([3, 4, 5, 6])

    @settings(max_examples=200, deadline=None)
    @given(
        read=st.binary(min_size=1, max_size=64),
        unit_write=st.integers(0, 96),
        comp_over_read=st.integers(1, 300),
    )
    def test_matches_oracle(self, read, unit_write, comp_over_read):
        unit_comp = len(read) * comp_over_read
        task, out = run_on_bytes(list(read), unit_write, unit_comp)
        assert out == oracle_write_region(read, unit_write, task.per_read_computation)


class TestDebugArena:
    def test_counts_reads_and_stores(self):
        spec = WorkloadSpec(unit_read=4, unit_write=6, unit_comp=8, iterations=2)
        arena = DebugArena(spec, seed=3)
        task = UnitTask.bind(spec, arena)
        run_unit_task(task, 0)
        assert arena.reads == 4
        assert arena.stores == 6  # 4 in-loop stores + 2 padding stores
        run_unit_task(task, 1)
        assert arena.reads == 8
        assert arena.stores == 12

    def test_matches_plain_arena_output(self):
        spec = WorkloadSpec(unit_read=8, unit_write=8, unit_comp=24, iterations=4)
        debug = DebugArena(spec, seed=9)
        plain = init_arena(spec, seed=9)
        for i in range(spec.iterations):
            run_unit_task(UnitTask.bind(spec, debug), i)
            run_unit_task(UnitTask.bind(spec, plain), i)
        assert bytes(debug.write_buffer) == plain.write_buffer.tobytes()


class TestArena:
    def test_init_is_deterministic(self):
        spec = WorkloadSpec(unit_read=16, unit_write=8, unit_comp=32, iterations=8)
        a = init_arena(spec, seed=42)
        b = init_arena(spec, seed=42)
        c = init_arena(spec, seed=43)
        assert a.read_buffer.tobytes() == b.read_buffer.tobytes()
        assert a.read_buffer.tobytes() != c.read_buffer.tobytes()
        assert not a.write_buffer.any()

    def test_regions_slice_correctly(self):
        spec = WorkloadSpec(unit_read=4, unit_write=2, unit_comp=8, iterations=3)
        arena = init_arena(spec, seed=1)
        whole = arena.read_buffer.tobytes()
        assert arena.read_region(1).tobytes() == whole[4:8]
        assert len(arena.write_region(2)) == 2

    def test_memory_cap_names_offender(self):
        spec = WorkloadSpec(unit_read=1024, unit_write=8, unit_comp=2048, iterations=2048)
        with pytest.raises(ArenaSizeError, match=r"2048 x 1024"):
            init_arena(spec, seed=0, memory_cap=1 << 20)

    def test_lcg_matches_scalar_reference(self):
        # independent scalar LCG; the arena fill is vectorized
        a, c, mask = 6364136223846793005, 1442695040888963407, (1 << 64) - 1
        seed = 12345
        state, ref = seed, bytearray()
        for _ in range(5):
            state = (a * state + c) & mask
            ref += state.to_bytes(8, "little")
        assert lcg_bytes(37, seed) == bytes(ref)[:37]

    def test_lcg_distinct_seeds_differ(self):
        assert lcg_bytes(64, 1) != lcg_bytes(64, 2)


class TestComputationCap:
    def test_cap_preserves_true_count(self):
        spec = WorkloadSpec(unit_read=64, unit_write=64, unit_comp=2**60, iterations=1)
        arena = init_arena(spec, seed=0)
        task = UnitTask.bind(spec, arena)
        assert task.per_read_computation == DEFAULT_COMP_CAP
        assert task.per_read_computation_true == 2**60 // 64

    def test_uncapped_below_ceiling(self):
        spec = WorkloadSpec(unit_read=8, unit_write=8, unit_comp=64, iterations=1)
        task = UnitTask.bind(spec, init_arena(spec, seed=0))
        assert task.per_read_computation == task.per_read_computation_true == 8


class TestEffectiveWork:
    def test_sums_parameters(self):
        spec = WorkloadSpec(unit_read=64, unit_write=1024, unit_comp=2**60, iterations=1)
        assert effective_work(spec) == 64 + 1024 + 2**60

    def test_small(self):
        assert effective_work(WorkloadSpec(unit_read=8, unit_write=4, unit_comp=16)) == 28


class TestChunkRunner:
    def cases(self):
        yield WorkloadSpec(unit_read=8, unit_write=8, unit_comp=16, iterations=16), 5
        yield WorkloadSpec(unit_read=3, unit_write=7, unit_comp=9, iterations=11), 2
        yield WorkloadSpec(unit_read=16, unit_write=4, unit_comp=4096, iterations=8), 8

    def test_compiled_matches_plain_loop(self):
        for spec, seed in self.cases():
            compiled_arena = init_arena(spec, seed=seed)
            plain_arena = init_arena(spec, seed=seed)
            fast = make_chunk_runner(UnitTask.bind(spec, compiled_arena), compiled=True)
            slow = make_chunk_runner(UnitTask.bind(spec, plain_arena), compiled=False)
            fast(0, spec.iterations)
            slow(0, spec.iterations)
            assert (
                compiled_arena.write_buffer.tobytes()
                == plain_arena.write_buffer.tobytes()
            )

    def test_partial_ranges_compose(self):
        spec = WorkloadSpec(unit_read=4, unit_write=4, unit_comp=8, iterations=12)
        whole = init_arena(spec, seed=7)
        split = init_arena(spec, seed=7)
        make_chunk_runner(UnitTask.bind(spec, whole))(0, 12)
        runner = make_chunk_runner(UnitTask.bind(spec, split))
        runner(0, 5)
        runner(5, 5)  # empty range is a no-op
        runner(5, 12)
        assert whole.write_buffer.tobytes() == split.write_buffer.tobytes()

    def test_list_backed_arena_falls_back_to_plain(self):
        spec = WorkloadSpec(unit_read=4, unit_write=4, unit_comp=8, iterations=4)
        arena = DebugArena(spec, seed=1)
        runner = make_chunk_runner(UnitTask.bind(spec, arena), compiled=True)
        runner(0, 4)
        assert arena.reads == 16  # compiled kernel would bypass the counters
