"""Block-size model: a ratio of two linear forms over normalized workload
features, with prediction, squared loss, and a gradient-descent fitter.

    B = (alpha*G + delta0) / (beta0*T + beta1*R + beta2*W + beta3*C + delta1)

Features: G = 100 x core groups, T = participant count, R = log2(unit_read),
W = log2(unit_write), C = log2(unit_comp)/10.  The published weight set
predicts the latency-minimizing block size for a workload without any
measurement.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, WorkloadSpec

DEFAULT_SINGULARITY_EPS = 1e-6

WEIGHT_FIELDS = ("alpha", "delta0", "beta0", "beta1", "beta2", "beta3", "delta1")


class SingularityError(ArithmeticError):
    """The denominator linear form is within eps of zero."""


@dataclass(frozen=True)
class Features:
    """Normalized model inputs; real-valued, no power-of-two requirement."""

    g: float
    t: float
    r: float
    w: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.g, self.t, self.r, self.w, self.c], dtype=float)


@dataclass(frozen=True)
class Weights:
    alpha: float
    delta0: float
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    delta1: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in WEIGHT_FIELDS], dtype=float)

    @classmethod
    def from_array(cls, values) -> Weights:
        return cls(**{f: float(v) for f, v in zip(WEIGHT_FIELDS, values, strict=True)})


PUBLISHED = Weights(
    alpha=-61.84,
    delta0=1558.31,
    beta0=-10.48,
    beta1=-33.71,
    beta2=-34.50,
    beta3=-26.84,
    delta1=693.13,
)


@dataclass(frozen=True)
class TrainingSet:
    """Rows of (features, observed best block size)."""

    features: tuple[Features, ...]
    best_blocks: tuple[int, ...]

    def __post_init__(self):
        if len(self.features) != len(self.best_blocks):
            raise ValueError("features and best_blocks differ in length")
        if any(b < 1 for b in self.best_blocks):
            raise ValueError("best block sizes must be >= 1")

    def __len__(self) -> int:
        return len(self.features)

    @classmethod
    def from_rows(cls, rows) -> TrainingSet:
        feats, blocks = [], []
        for f, b in rows:
            feats.append(f)
            blocks.append(int(b))
        return cls(tuple(feats), tuple(blocks))

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.array([f.as_array() for f in self.features], dtype=float)
        y = np.array(self.best_blocks, dtype=float)
        return x, y


def normalize(groups: int, threads: int, spec: WorkloadSpec) -> Features:
    """Map a raw (core groups, threads, workload) triple onto model features."""
    if groups < 1:
        raise ConfigError(f"groups must be >= 1, got {groups}")
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")
    if spec.unit_read < 1 or spec.unit_write < 1:
        raise ConfigError(
            "normalization needs unit_read >= 1 and unit_write >= 1 "
            f"(got {spec.unit_read}, {spec.unit_write})"
        )
    if spec.unit_comp < 2:
        raise ConfigError(f"normalization needs unit_comp >= 2, got {spec.unit_comp}")
    return Features(
        g=100.0 * groups,
        t=float(threads),
        r=math.log2(spec.unit_read),
        w=math.log2(spec.unit_write),
        c=math.log2(spec.unit_comp) / 10.0,
    )


def _forms(w: Weights, f: Features) -> tuple[float, float]:
    numerator = w.alpha * f.g + w.delta0
    denominator = w.beta0 * f.t + w.beta1 * f.r + w.beta2 * f.w + w.beta3 * f.c + w.delta1
    return numerator, denominator


def predict_raw(w: Weights, f: Features, *, eps: float = DEFAULT_SINGULARITY_EPS) -> float:
    """Unrounded model output; raises SingularityError near a zero denominator."""
    numerator, denominator = _forms(w, f)
    if abs(denominator) < eps:
        raise SingularityError(
            f"denominator {denominator!r} within {eps} of zero for features {f}"
        )
    return numerator / denominator


def predict(
    w: Weights,
    f: Features,
    n_cap: int | None = None,
    *,
    eps: float = DEFAULT_SINGULARITY_EPS,
    on_singularity: str = "error",
) -> int:
    """Predicted block size: floor of the raw output, clamped to [1, n_cap].

    on_singularity="clamp" returns n_cap (the largest useful block) instead
    of raising when the denominator sits within eps of zero; it requires
    n_cap.
    """
    if on_singularity not in ("error", "clamp"):
        raise ValueError(f"on_singularity must be 'error' or 'clamp', got {on_singularity!r}")
    try:
        raw = predict_raw(w, f, eps=eps)
    except SingularityError:
        if on_singularity == "error":
            raise
        if n_cap is None:
            raise ValueError("on_singularity='clamp' requires n_cap") from None
        return max(1, n_cap)
    block = math.floor(raw)
    if block < 1:
        block = 1
    if n_cap is not None and block > n_cap:
        block = max(1, n_cap)
    return block


def loss(w: Weights, data: TrainingSet, *, eps: float = DEFAULT_SINGULARITY_EPS) -> float:
    """Summed squared error of the raw (unfloored) predictions."""
    value, _ = _loss_and_gradient(w.as_array(), *data.as_arrays(), eps=eps)
    return value


def loss_gradient(
    w: Weights, data: TrainingSet, *, eps: float = DEFAULT_SINGULARITY_EPS
) -> np.ndarray:
    """Analytic gradient of loss with respect to the seven weights."""
    _, gradient = _loss_and_gradient(w.as_array(), *data.as_arrays(), eps=eps)
    return gradient


def _loss_and_gradient(w: np.ndarray, x: np.ndarray, y: np.ndarray, *, eps: float):
    if len(y) == 0:
        raise ValueError("training set is empty")
    numerator = w[0] * x[:, 0] + w[1]
    denominator = x[:, 1:] @ w[2:6] + w[6]
    bad = np.abs(denominator) < eps
    if bad.any():
        row = int(np.argmax(bad))
        raise SingularityError(
            f"denominator within {eps} of zero on row {row} (features {x[row].tolist()})"
        )
    prediction = numerator / denominator
    residual = prediction - y
    value = float(residual @ residual)
    scale = 2.0 * residual
    ratio = scale * (-prediction / denominator)
    gradient = np.empty(7)
    gradient[0] = scale @ (x[:, 0] / denominator)
    gradient[1] = np.sum(scale / denominator)
    gradient[2:6] = ratio @ x[:, 1:]
    gradient[6] = np.sum(ratio)
    return value, gradient


@dataclass(frozen=True)
class FitConfig:
    """Gradient descent settings: initial step for the backtracking line
    search, the epoch budget, and the minimum per-epoch loss drop below
    which fitting stops early (0 disables early stopping)."""

    step_size: float = 1.0
    max_epochs: int = 50_000
    tolerance: float = 0.0
    eps: float = DEFAULT_SINGULARITY_EPS


@dataclass(frozen=True)
class FitResult:
    weights: Weights
    loss: float
    epochs: int
    trace: tuple[tuple[int, float], ...]


def fit(data: TrainingSet, init: Weights, config: FitConfig = FitConfig()) -> FitResult:
    """Full-batch gradient descent with a backtracking line search.

    Every accepted step strictly decreases the loss and keeps all row
    denominators off the singularity, so the returned loss never exceeds the
    initial one.  The trace records (epoch, loss) for each accepted epoch,
    starting at epoch 0 with the initial loss.
    """
    x, y = data.as_arrays()
    w = init.as_array()
    current, gradient = _checked_step(w, x, y, config.eps)
    trace = [(0, current)]
    step = config.step_size
    epochs = 0
    for epoch in range(1, config.max_epochs + 1):
        accepted = None
        trial = step
        for _ in range(60):
            candidate = w - trial * gradient
            result = _try_loss(candidate, x, y, config.eps)
            if result is not None and result[0] < current:
                accepted = (candidate, *result)
                break
            trial *= 0.5
        if accepted is None:
            break  # no descent direction at any feasible step: converged
        w, new_loss, gradient = accepted
        dropped = current - new_loss
        current = new_loss
        epochs = epoch
        trace.append((epoch, current))
        step = min(trial * 2.0, 1e9)
        if config.tolerance > 0.0 and dropped < config.tolerance:
            break
    return FitResult(
        weights=Weights.from_array(w),
        loss=current,
        epochs=epochs,
        trace=tuple(trace),
    )


def _checked_step(w, x, y, eps):
    value, gradient = _loss_and_gradient(w, x, y, eps=eps)
    if not np.isfinite(gradient).all():
        row = _offending_row(w, x, y)
        raise ArithmeticError(
            f"non-finite gradient; offending row {row}: features {x[row].tolist()}, "
            f"target {y[row]}"
        )
    return value, gradient


def _offending_row(w, x, y) -> int:
    denominator = x[:, 1:] @ w[2:6] + w[6]
    prediction = (w[0] * x[:, 0] + w[1]) / denominator
    contributions = (prediction - y) ** 2
    finite = np.isfinite(contributions)
    return int(np.argmin(finite)) if not finite.all() else 0


def _try_loss(w, x, y, eps):
    try:
        value, gradient = _loss_and_gradient(w, x, y, eps=eps)
    except SingularityError:
        return None
    if not np.isfinite(value) or not np.isfinite(gradient).all():
        return None
    return value, gradient


def random_weights(seed: int) -> Weights:
    """Standard-normal initial weights from a seeded generator."""
    rng = np.random.default_rng(seed)
    return Weights.from_array(rng.normal(0.0, 1.0, size=7))


TRAINING_CSV_HEADER = ["G", "T", "R", "W", "C", "B"]


def load_training_csv(path: str | Path, *, raw: bool = False) -> TrainingSet:
    """Read a training table.

    Header must be G,T,R,W,C,B.  By default the feature columns already hold
    normalized values; raw=True treats them as (core groups, threads,
    unit_read bytes, unit_write bytes, unit_comp count) and normalizes here.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRAINING_CSV_HEADER:
            raise ConfigError(
                f"{path}: expected header {','.join(TRAINING_CSV_HEADER)}, got {header}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 6:
                raise ConfigError(f"{path}:{line_no}: expected 6 columns, got {len(row)}")
            try:
                if raw:
                    g, t, r, w, c = (int(v) for v in row[:5])
                    features = normalize(
                        g, t, WorkloadSpec(unit_read=r, unit_write=w, unit_comp=c)
                    )
                else:
                    values = [float(v) for v in row[:5]]
                    features = Features(*values)
                block = int(row[5])
            except (ValueError, ConfigError) as exc:
                raise ConfigError(f"{path}:{line_no}: {exc}") from exc
            rows.append((features, block))
    if not rows:
        raise ConfigError(f"{path}: no training rows")
    return TrainingSet.from_rows(rows)


def write_training_csv(data: TrainingSet, path: str | Path) -> None:
    """Write the normalized-feature form of a training table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAINING_CSV_HEADER)
        for features, block in zip(data.features, data.best_blocks):
            writer.writerow(
                [features.g, features.t, features.r, features.w, features.c, block]
            )


def save_weights(
    weights: Weights,
    path: str | Path,
    *,
    loss_value: float | None = None,
    epochs: int | None = None,
    seed: int | None = None,
) -> None:
    """Persist weights as structured text: the named weight fields plus a
    fit metadata block (loss, epochs, seed) when available."""
    doc: dict = {name: float(getattr(weights, name)) for name in WEIGHT_FIELDS}
    if loss_value is not None or epochs is not None or seed is not None:
        doc["fit"] = {"loss": loss_value, "epochs": epochs, "seed": seed}
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_weights(path: str | Path) -> Weights:
    """Read a weights file written by save_weights.  Floats round-trip
    bit-identically (repr-based serialization)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    missing = set(WEIGHT_FIELDS) - set(data)
    if missing:
        raise ConfigError(f"{path}: missing weight fields {sorted(missing)}")
    return Weights(**{name: float(data[name]) for name in WEIGHT_FIELDS})
