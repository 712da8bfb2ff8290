"""Chunked parallel-for with a cost-model-tuned block size.

The package splits into the executor (thread pool plus claim counter), the
synthetic workload it schedules, the block-size cost model with its fitter,
and a benchmark harness that ties them together.  `blockwise.cli` exposes all
of it on the command line.
"""
from .bench import (
    CostEstimate,
    FaaLatencySample,
    SweepFailure,
    SweepResult,
    amdahl_speedup,
    best_block,
    compare_strategies,
    estimate_cost,
    measure_faa_latency,
    measure_once,
    run_sweep,
)
from .config import (
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
from .costmodel import (
    PUBLISHED,
    Features,
    FitConfig,
    FitResult,
    SingularityError,
    TrainingSet,
    Weights,
    fit,
    load_training_csv,
    load_weights,
    loss,
    normalize,
    predict,
    save_weights,
)
from .executor import (
    ClaimCounter,
    CostModelChoice,
    FixedBlock,
    Guided,
    PoolClosedError,
    RunStats,
    ThreadPool,
    claim,
    next_chunk_guided,
    parallel_for,
)
from .workload import (
    Arena,
    ArenaSizeError,
    DebugArena,
    UnitTask,
    effective_work,
    init_arena,
    run_unit_task,
)

__version__ = "0.1.0"

__all__ = [
    "Arena",
    "ArenaSizeError",
    "ClaimCounter",
    "ConfigError",
    "CoreGroup",
    "CostEstimate",
    "CostModelChoice",
    "DebugArena",
    "FaaLatencySample",
    "Features",
    "FitConfig",
    "FitResult",
    "FixedBlock",
    "Guided",
    "PUBLISHED",
    "PoolClosedError",
    "RunStats",
    "SingularityError",
    "SweepFailure",
    "SweepResult",
    "SweepSpec",
    "ThreadPool",
    "Topology",
    "TrainingSet",
    "UnitTask",
    "Weights",
    "WorkloadSpec",
    "amdahl_speedup",
    "best_block",
    "claim",
    "compare_strategies",
    "detect_topology",
    "effective_work",
    "estimate_cost",
    "fit",
    "init_arena",
    "load_sweep",
    "load_topology",
    "load_training_csv",
    "load_weights",
    "loss",
    "measure_faa_latency",
    "measure_once",
    "next_chunk_guided",
    "normalize",
    "parallel_for",
    "predict",
    "run_sweep",
    "run_unit_task",
    "save_weights",
    "write_sweep",
    "write_topology",
]
