"""Topology and spec containers: validation, file round trips, detection."""
import pytest
from hypothesis import given, strategies as st

from blockwise.config import (
    ConfigError,
    CoreGroup,
    SweepSpec,
    Topology,
    WorkloadSpec,
    detect_topology,
    load_sweep,
    load_topology,
    write_sweep,
    write_topology,
)


def make_topology(groups, workers=None, pinning=False):
    core_groups = tuple(
        CoreGroup(group_id=i, core_ids=tuple(cores)) for i, cores in enumerate(groups)
    )
    if workers is None:
        workers = sum(len(g) for g in groups)
    return Topology(core_groups=core_groups, worker_count=workers, pinning=pinning)


class TestCoreGroup:
    def test_holds_cores(self):
        g = CoreGroup(group_id=0, core_ids=(0, 1, 2))
        assert g.core_ids == (0, 1, 2)

    def test_rejects_empty(self):
        with pytest.raises(ConfigError):
            CoreGroup(group_id=0, core_ids=())

    def test_rejects_duplicate_cores(self):
        with pytest.raises(ConfigError):
            CoreGroup(group_id=0, core_ids=(1, 1))

    def test_rejects_negative_core(self):
        with pytest.raises(ConfigError):
            CoreGroup(group_id=0, core_ids=(-1,))


class TestTopology:
    def test_properties(self):
        topo = make_topology([(0, 1), (2, 3)], workers=3)
        assert topo.group_count == 2
        assert topo.cores == (0, 1, 2, 3)
        assert topo.worker_count == 3

    def test_rejects_core_in_two_groups(self):
        with pytest.raises(ConfigError):
            make_topology([(0, 1), (1, 2)])

    def test_rejects_zero_workers(self):
        with pytest.raises(ConfigError):
            make_topology([(0,)], workers=0)

    def test_with_workers_keeps_groups(self):
        topo = make_topology([(0, 1)], workers=2)
        bumped = topo.with_workers(8)
        assert bumped.worker_count == 8
        assert bumped.core_groups == topo.core_groups
        assert topo.worker_count == 2  # original untouched


class TestTopologyFiles:
    def test_round_trip(self, tmp_path):
        topo = make_topology([(0, 1), (2, 3)], workers=3, pinning=True)
        path = tmp_path / "topo.yaml"
        write_topology(topo, path)
        assert load_topology(path) == topo

    def test_workers_default_to_core_count(self, tmp_path):
        path = tmp_path / "topo.yaml"
        path.write_text("groups:\n- [0, 1]\n- [2]\n")
        topo = load_topology(path)
        assert topo.worker_count == 3
        assert topo.pinning is False

    def test_rejects_unknown_field(self, tmp_path):
        path = tmp_path / "topo.yaml"
        path.write_text("groups:\n- [0]\nsockets: 2\n")
        with pytest.raises(ConfigError):
            load_topology(path)

    def test_rejects_missing_groups(self, tmp_path):
        path = tmp_path / "topo.yaml"
        path.write_text("workers: 4\n")
        with pytest.raises(ConfigError):
            load_topology(path)

    @given(
        groups=st.lists(
            st.lists(st.integers(0, 63), min_size=1, max_size=4, unique=True),
            min_size=1,
            max_size=4,
        ).filter(
            lambda gs: len({c for g in gs for c in g}) == sum(len(g) for g in gs)
        ),
        workers=st.integers(1, 16),
        pinning=st.booleans(),
    )
    def test_round_trip_property(self, groups, workers, pinning, tmp_path_factory):
        topo = make_topology(groups, workers=workers, pinning=pinning)
        path = tmp_path_factory.mktemp("topoprop") / "t.yaml"
        write_topology(topo, path)
        assert load_topology(path) == topo


class TestDetectTopology:
    def test_detected_is_valid(self):
        topo = detect_topology()
        assert topo.worker_count >= 1
        assert topo.group_count >= 1
        # every visible core lands in exactly one group
        assert len(topo.cores) == len(set(topo.cores))


class TestWorkloadSpec:
    def test_defaults(self):
        spec = WorkloadSpec(unit_read=8, unit_write=8, unit_comp=16)
        assert spec.iterations == 1024

    def test_rejects_negative_read(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(unit_read=-1, unit_write=0, unit_comp=1)

    def test_rejects_comp_below_read(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(unit_read=8, unit_write=4, unit_comp=4)

    def test_rejects_write_without_read(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(unit_read=0, unit_write=4, unit_comp=8)

    def test_rejects_zero_iterations(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(unit_read=4, unit_write=4, unit_comp=8, iterations=0)

    def test_read_free_compute_allowed(self):
        spec = WorkloadSpec(unit_read=0, unit_write=0, unit_comp=100)
        assert spec.unit_comp == 100


class TestSweepSpec:
    def workload(self):
        return WorkloadSpec(unit_read=8, unit_write=8, unit_comp=16, iterations=64)

    def test_defaults(self):
        spec = SweepSpec(
            workload=self.workload(), block_sizes=(1, 2), thread_counts=(1,)
        )
        assert spec.repetitions == 9
        assert spec.warmups == 2

    def test_rejects_unsorted_axis(self):
        with pytest.raises(ConfigError):
            SweepSpec(
                workload=self.workload(), block_sizes=(4, 2), thread_counts=(1,)
            )

    def test_rejects_duplicate_axis_value(self):
        with pytest.raises(ConfigError):
            SweepSpec(
                workload=self.workload(), block_sizes=(2, 2), thread_counts=(1,)
            )

    def test_rejects_empty_axis(self):
        with pytest.raises(ConfigError):
            SweepSpec(workload=self.workload(), block_sizes=(), thread_counts=(1,))

    def test_file_round_trip(self, tmp_path):
        spec = SweepSpec(
            workload=self.workload(),
            block_sizes=(1, 8, 64),
            thread_counts=(1, 2, 4),
            repetitions=3,
            warmups=1,
        )
        path = tmp_path / "sweep.yaml"
        write_sweep(spec, path)
        assert load_sweep(path) == spec

    def test_load_applies_defaults(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        path.write_text(
            "unit_read: 8\nunit_write: 8\nunit_comp: 16\n"
            "block_sizes: [1, 4]\nthread_counts: [2]\n"
        )
        spec = load_sweep(path)
        assert spec.workload.iterations == 1024
        assert spec.repetitions == 9
        assert spec.warmups == 2

    def test_load_rejects_unknown_field(self, tmp_path):
        path = tmp_path / "sweep.yaml"
        path.write_text(
            "unit_read: 8\nunit_write: 8\nunit_comp: 16\n"
            "block_sizes: [1]\nthread_counts: [1]\nchunking: guided\n"
        )
        with pytest.raises(ConfigError):
            load_sweep(path)
