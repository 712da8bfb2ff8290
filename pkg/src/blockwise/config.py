"""Run configuration: machine topology, workload parameters, sweep plans."""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

DEFAULT_ITERATIONS = 1024
DEFAULT_REPETITIONS = 9
DEFAULT_WARMUPS = 2


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config file."""


@dataclass(frozen=True)
class CoreGroup:
    """A set of logical cores that share a last-level cache."""

    group_id: int
    core_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "core_ids", tuple(int(c) for c in self.core_ids))
        if not self.core_ids:
            raise ConfigError(f"core group {self.group_id} is empty")
        if len(set(self.core_ids)) != len(self.core_ids):
            raise ConfigError(f"core group {self.group_id} repeats a core id")
        if any(c < 0 for c in self.core_ids):
            raise ConfigError(f"core group {self.group_id} has a negative core id")


@dataclass(frozen=True)
class Topology:
    """Core groups plus the worker count and pinning plan for a run.

    worker_count is the number of participants T, counting the calling
    thread.  Every core id must appear in exactly one group.
    """

    core_groups: tuple[CoreGroup, ...]
    worker_count: int
    pinning: bool = False

    def __post_init__(self):
        object.__setattr__(self, "core_groups", tuple(self.core_groups))
        if not self.core_groups:
            raise ConfigError("topology needs at least one core group")
        seen: set[int] = set()
        for group in self.core_groups:
            dup = seen.intersection(group.core_ids)
            if dup:
                raise ConfigError(f"core id {min(dup)} appears in more than one group")
            seen.update(group.core_ids)
        if self.worker_count < 1:
            raise ConfigError(f"worker_count must be >= 1, got {self.worker_count}")

    @property
    def group_count(self) -> int:
        return len(self.core_groups)

    @property
    def cores(self) -> tuple[int, ...]:
        return tuple(c for group in self.core_groups for c in group.core_ids)

    def with_workers(self, worker_count: int) -> Topology:
        """Same machine shape with a different participant count."""
        return replace(self, worker_count=worker_count)


@dataclass(frozen=True)
class WorkloadSpec:
    """One unit task's shape: bytes read, bytes written, computations, and
    the total iteration count N of the surrounding parallel_for."""

    unit_read: int
    unit_write: int
    unit_comp: int
    iterations: int = DEFAULT_ITERATIONS

    def __post_init__(self):
        if self.unit_read < 0 or self.unit_write < 0:
            raise ConfigError("unit_read and unit_write must be >= 0")
        if self.unit_comp < 1:
            raise ConfigError(f"unit_comp must be >= 1, got {self.unit_comp}")
        if self.unit_read > 0:
            # per_read_computation = unit_comp // unit_read must stay >= 1
            if self.unit_comp < self.unit_read:
                raise ConfigError(
                    f"unit_comp ({self.unit_comp}) must be >= unit_read "
                    f"({self.unit_read}) so each byte read gets at least one computation"
                )
        elif self.unit_write > 0:
            raise ConfigError("unit_read = 0 requires unit_write = 0 (no-op task)")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")


@dataclass(frozen=True)
class SweepSpec:
    """A block-size x thread-count measurement grid over one workload."""

    workload: WorkloadSpec
    block_sizes: tuple[int, ...]
    thread_counts: tuple[int, ...]
    repetitions: int = DEFAULT_REPETITIONS
    warmups: int = DEFAULT_WARMUPS

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        object.__setattr__(self, "thread_counts", tuple(int(t) for t in self.thread_counts))
        _check_axis("block_sizes", self.block_sizes)
        _check_axis("thread_counts", self.thread_counts)
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.warmups < 0:
            raise ConfigError(f"warmups must be >= 0, got {self.warmups}")


def _check_axis(name: str, values: tuple[int, ...]) -> None:
    if not values:
        raise ConfigError(f"{name} must be non-empty")
    if any(v < 1 for v in values):
        raise ConfigError(f"{name} entries must be >= 1")
    if any(b >= a for b, a in zip(values, values[1:])):
        raise ConfigError(f"{name} must be strictly increasing")


def _load_yaml(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping, got {type(data).__name__}")
    return data


def load_topology(path: str | Path) -> Topology:
    """Read a topology file.

    Schema: ``groups: [[int, ...], ...]`` with optional ``workers: int``
    (default: total listed cores) and ``pin: bool`` (default: false).
    """
    data = _load_yaml(path)
    if "groups" not in data:
        raise ConfigError(f"{path}: missing required field 'groups'")
    raw_groups = data["groups"]
    if not isinstance(raw_groups, list) or not all(isinstance(g, list) for g in raw_groups):
        raise ConfigError(f"{path}: 'groups' must be a list of core-id lists")
    groups = tuple(CoreGroup(i, tuple(g)) for i, g in enumerate(raw_groups))
    total = sum(len(g.core_ids) for g in groups)
    workers = int(data.get("workers", total))
    pin = bool(data.get("pin", False))
    unknown = set(data) - {"groups", "workers", "pin"}
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    return Topology(core_groups=groups, worker_count=workers, pinning=pin)


def write_topology(topo: Topology, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_topology(topo))


def format_topology(topo: Topology) -> str:
    doc = {
        "groups": [list(g.core_ids) for g in topo.core_groups],
        "workers": topo.worker_count,
        "pin": topo.pinning,
    }
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def detect_topology() -> Topology:
    """Best-effort detection of logical cores and their last-level-cache
    groups from the OS.  Falls back to one group holding every core."""
    cores = _available_cores()
    groups = _cache_groups(cores)
    if groups is None:
        groups = (CoreGroup(0, tuple(cores)),)
    return Topology(core_groups=groups, worker_count=len(cores), pinning=False)


def _available_cores() -> list[int]:
    try:
        cores = sorted(os.sched_getaffinity(0))
    except (AttributeError, OSError):
        cores = list(range(os.cpu_count() or 1))
    return cores or [0]


def _cache_groups(cores: list[int]) -> tuple[CoreGroup, ...] | None:
    """Group cores by their level-3 shared_cpu_list; None when unknowable."""
    by_domain: dict[str, list[int]] = {}
    for core in cores:
        path = Path(f"/sys/devices/system/cpu/cpu{core}/cache/index3/shared_cpu_list")
        try:
            domain = path.read_text().strip()
        except OSError:
            return None
        if not domain:
            return None
        by_domain.setdefault(domain, []).append(core)
    groups = tuple(
        CoreGroup(i, tuple(sorted(members)))
        for i, (_, members) in enumerate(sorted(by_domain.items(), key=lambda kv: min(kv[1])))
    )
    # Grouping must partition exactly the cores we can use.
    if sorted(c for g in groups for c in g.core_ids) != cores:
        return None
    return groups


_SWEEP_FIELDS = {
    "unit_read", "unit_write", "unit_comp", "iterations",
    "block_sizes", "thread_counts", "repetitions", "warmups",
}


def load_sweep(path: str | Path) -> SweepSpec:
    """Read a sweep file.

    Schema: ``unit_read, unit_write, unit_comp, iterations, block_sizes[],
    thread_counts[], repetitions, warmups`` (iterations, repetitions and
    warmups may be omitted and take the module defaults).
    """
    data = _load_yaml(path)
    unknown = set(data) - _SWEEP_FIELDS
    if unknown:
        raise ConfigError(f"{path}: unknown fields {sorted(unknown)}")
    missing = {"unit_read", "unit_write", "unit_comp", "block_sizes", "thread_counts"} - set(data)
    if missing:
        raise ConfigError(f"{path}: missing required fields {sorted(missing)}")
    workload = WorkloadSpec(
        unit_read=int(data["unit_read"]),
        unit_write=int(data["unit_write"]),
        unit_comp=int(data["unit_comp"]),
        iterations=int(data.get("iterations", DEFAULT_ITERATIONS)),
    )
    return SweepSpec(
        workload=workload,
        block_sizes=tuple(data["block_sizes"]),
        thread_counts=tuple(data["thread_counts"]),
        repetitions=int(data.get("repetitions", DEFAULT_REPETITIONS)),
        warmups=int(data.get("warmups", DEFAULT_WARMUPS)),
    )


def write_sweep(spec: SweepSpec, path: str | Path) -> None:
    doc = {
        "unit_read": spec.workload.unit_read,
        "unit_write": spec.workload.unit_write,
        "unit_comp": spec.workload.unit_comp,
        "iterations": spec.workload.iterations,
        "block_sizes": list(spec.block_sizes),
        "thread_counts": list(spec.thread_counts),
        "repetitions": spec.repetitions,
        "warmups": spec.warmups,
    }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)
