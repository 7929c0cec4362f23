"""Local cost functions, synthetic data, CSV loading and partitioning."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InsufficientData, InvalidArgument, ParseError, SchemaError

LINEAR = "linear_regression"
LOGISTIC = "logistic_regression"
KINDS = (LINEAR, LOGISTIC)

_TASK_ALIASES = {"linear": LINEAR, LINEAR: LINEAR, "logistic": LOGISTIC, LOGISTIC: LOGISTIC}


def canonical_kind(task: str) -> str:
    try:
        return _TASK_ALIASES[task]
    except KeyError:
        raise InvalidArgument(f"unknown task {task!r}; expected linear or logistic") from None


@dataclass(frozen=True)
class DenseDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DimensionMismatch(f"features must be a 2-D array with d >= 1, got {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class LocalObjective:
    """One worker's cost f_n.

    ``linear_regression``: 0.5 * ||X theta - y||^2.
    ``logistic_regression``: mean log-loss plus ``ridge / 2 * ||theta||^2``.
    """

    kind: str
    data: DenseDataset
    ridge: float = 0.0
    _gram: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == LINEAR and self.ridge != 0.0:
            raise InvalidArgument("linear regression objectives carry no ridge term")
        if self.ridge < 0:
            raise InvalidArgument(f"ridge must be nonnegative, got {self.ridge}")
        if kind == LOGISTIC and not np.all(np.isin(self.data.labels, (-1.0, 1.0))):
            raise InvalidArgument("logistic labels must be -1 or +1")

    @property
    def dim(self) -> int:
        return self.data.dim

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({self.dim},)")
        return theta

    def value(self, theta) -> float:
        theta = self._check(theta)
        X, y = self.data.features, self.data.labels
        if self.kind == LINEAR:
            r = X @ theta - y
            return 0.5 * float(r @ r)
        z = y * (X @ theta)
        # log(1 + exp(-z)) without overflow
        losses = np.log1p(np.exp(-np.abs(z))) + np.maximum(0.0, -z)
        return float(losses.mean()) + 0.5 * self.ridge * float(theta @ theta)

    def gradient(self, theta) -> np.ndarray:
        theta = self._check(theta)
        X, y = self.data.features, self.data.labels
        if self.kind == LINEAR:
            return X.T @ (X @ theta - y)
        z = y * (X @ theta)
        weights = -y * _sigmoid(-z)
        return X.T @ weights / len(y) + self.ridge * theta

    def hessian(self, theta) -> np.ndarray:
        theta = self._check(theta)
        X = self.data.features
        if self.kind == LINEAR:
            return self.gram()
        z = self.data.labels * (X @ theta)
        s = _sigmoid(z)
        w = s * (1.0 - s)
        return (X.T * w) @ X / len(w) + self.ridge * np.eye(self.dim)

    def gram(self) -> np.ndarray:
        """X^T X, cached."""
        if self._gram is None:
            X = self.data.features
            object.__setattr__(self, "_gram", X.T @ X)
        return self._gram


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def value(obj: LocalObjective, theta) -> float:
    return obj.value(theta)


def gradient(obj: LocalObjective, theta) -> np.ndarray:
    return obj.gradient(theta)


def generate_synthetic(
    task: str, n_samples: int, dim: int, noise_std: float = 0.0, seed: int = 0
) -> tuple[DenseDataset, np.ndarray]:
    """Gaussian features and ground truth; labels follow the task.

    Returns the dataset and the ground-truth parameter vector.
    """
    kind = canonical_kind(task)
    if n_samples < 1 or dim < 1:
        raise InvalidArgument("n_samples and dim must be positive")
    if noise_std < 0:
        raise InvalidArgument("noise_std must be nonnegative")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_samples, dim))
    theta0 = rng.standard_normal(dim)
    noise = noise_std * rng.standard_normal(n_samples)
    signal = X @ theta0 + noise
    if kind == LINEAR:
        y = signal
    else:
        y = np.where(signal >= 0, 1.0, -1.0)
    return DenseDataset(X, y), theta0


def partition_uniform(ds: DenseDataset, n_workers: int) -> list[DenseDataset]:
    """Contiguous shards whose sizes differ by at most one."""
    if n_workers < 1:
        raise InvalidArgument(f"n_workers must be positive, got {n_workers}")
    s = ds.sample_count
    if s < n_workers:
        raise InsufficientData(f"{s} samples cannot cover {n_workers} workers")
    base, extra = divmod(s, n_workers)
    sizes = [base + (1 if i < extra else 0) for i in range(n_workers)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [
        DenseDataset(ds.features[a:b], ds.labels[a:b]) for a, b in zip(bounds[:-1], bounds[1:])
    ]


def make_objectives(
    task: str, shards: list[DenseDataset], ridge: float = 0.0
) -> list[LocalObjective]:
    kind = canonical_kind(task)
    if kind == LINEAR:
        ridge = 0.0
    return [LocalObjective(kind, shard, ridge) for shard in shards]


@dataclass(frozen=True)
class CsvSchema:
    label_column: int = -1
    has_header: bool = False
    classification: bool = False


def load_csv(path: str | Path, schema: CsvSchema) -> DenseDataset:
    """Read a numeric CSV; all non-label columns become features.

    With ``schema.classification`` set, 0/1 labels are mapped to -1/+1.
    """
    text = Path(path).read_text()
    return parse_csv(text, schema)


def parse_csv(text: str, schema: CsvSchema) -> DenseDataset:
    rows = []
    width = None
    reader = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(reader, start=1):
        if lineno == 1 and schema.has_header:
            continue
        if not row or all(not cell.strip() for cell in row):
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise SchemaError("need at least one feature column and one label column")
            if not -width <= schema.label_column < width:
                raise SchemaError(f"label column {schema.label_column} outside {width} columns")
        elif len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno)
        try:
            rows.append([float(cell) for cell in row])
        except ValueError:
            raise ParseError(f"non-numeric field in {row!r}", line=lineno) from None
    if not rows:
        raise SchemaError("no data rows")
    table = np.asarray(rows)
    label_col = schema.label_column % width
    y = table[:, label_col]
    X = np.delete(table, label_col, axis=1)
    if schema.classification:
        if np.all(np.isin(y, (0.0, 1.0))):
            y = 2.0 * y - 1.0
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise SchemaError("classification labels must be in {-1, +1} or {0, 1}")
    return DenseDataset(X, y)


# Body Fat: percentage label first, 14 body measurements after it.
# Derm: class label in the last column, mapped to +/-1 by the caller.
BODY_FAT_SCHEMA = CsvSchema(label_column=0, has_header=True, classification=False)
DERM_SCHEMA = CsvSchema(label_column=-1, has_header=True, classification=True)
