"""Datasets, CSV ingestion, train/test splits and target standardization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .rng import SplitMix64

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


class DataError(ValueError):
    """Malformed input data (bad CSV, degenerate target, bad split...)."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable numeric feature matrix with a regression or class target.

    ``X`` is stored column-major (n x p) so per-feature scans are contiguous.
    For classification ``y`` holds integer codes into ``classes``.
    """

    feature_names: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    task: str = REGRESSION
    classes: tuple[str, ...] = ()
    target_name: str = "y"

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        X = np.asfortranarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("X must be two-dimensional")
        n, p = X.shape
        if n < 1:
            raise DataError("dataset has no rows")
        if len(self.feature_names) != p:
            raise DataError(f"{len(self.feature_names)} names for {p} feature columns")
        if len(set(self.feature_names)) != p:
            raise DataError("feature names are not unique")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains non-finite values")
        if self.task == CLASSIFICATION:
            y = np.ascontiguousarray(self.y, dtype=np.int64)
            if len(self.classes) < 2:
                raise DataError("classification needs at least 2 classes")
            if len(set(self.classes)) != len(self.classes):
                raise DataError("class labels are not unique")
            if y.size and (y.min() < 0 or y.max() >= len(self.classes)):
                raise DataError("class code outside the encoding table")
        else:
            y = np.ascontiguousarray(self.y, dtype=np.float64)
            if not np.all(np.isfinite(y)):
                raise DataError("target contains non-finite values")
        if y.shape != (n,):
            raise DataError(f"target length {y.shape} does not match {n} rows")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.feature_names, self.X[rows], self.y[rows], self.task,
                       self.classes, self.target_name)

    def select_features(self, features: Sequence[int]) -> "Dataset":
        features = np.asarray(sorted(features), dtype=np.int64)
        names = tuple(self.feature_names[i] for i in features)
        return Dataset(names, self.X[:, features], self.y, self.task, self.classes,
                       self.target_name)

    def with_target(self, y: np.ndarray) -> "Dataset":
        return Dataset(self.feature_names, self.X, y, self.task, self.classes,
                       self.target_name)


@dataclass(frozen=True)
class SplitPlan:
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    seed: int = field(default=0)


def _parse_float(cell: str, line: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataError(f"row {line}, column {column}: non-numeric value {cell!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {line}, column {column}: non-finite value {cell!r}")
    return value


def load_csv(path: str | Path, target_name: str, task: str = REGRESSION) -> Dataset:
    """Read a headed CSV; every non-target column becomes a numeric feature.

    Row numbers in error messages are file line numbers (the header is row 1).
    Class labels are encoded by order of first appearance.
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        seen: dict[str, int] = {}
        for col, name in enumerate(header, start=1):
            if name in seen:
                raise DataError(f"{path}: duplicate header {name!r} in columns "
                                f"{seen[name]} and {col}")
            seen[name] = col
        if target_name not in seen:
            raise DataError(f"{path}: target column {target_name!r} not found in header")
        t = seen[target_name] - 1
        feature_cols = [j for j in range(len(header)) if j != t]
        names = [header[j] for j in feature_cols]

        rows: list[list[float]] = []
        labels: list[str] = []
        for line, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"row {line}: expected {len(header)} cells, got {len(record)}")
            rows.append([_parse_float(record[j], line, header[j]) for j in feature_cols])
            cell = record[t]
            if cell == "":
                raise DataError(f"row {line}, column {target_name}: missing target")
            if task == REGRESSION:
                _parse_float(cell, line, target_name)
            labels.append(cell)
    if not rows:
        raise DataError(f"{path}: no data rows")

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    if task == CLASSIFICATION:
        codes: dict[str, int] = {}
        y = np.array([codes.setdefault(lab, len(codes)) for lab in labels], dtype=np.int64)
        if len(codes) < 2:
            raise DataError(f"{path}: classification target has fewer than 2 classes")
        return Dataset(tuple(names), X, y, task, tuple(codes), target_name)
    y = np.array([float(v) for v in labels], dtype=np.float64)
    return Dataset(tuple(names), X, y, task, (), target_name)


def read_features(path: str | Path, feature_names: Sequence[str]) -> np.ndarray:
    """Read the named feature columns of a headed CSV; other columns are ignored."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        where = {name: j for j, name in enumerate(header)}
        missing = [name for name in feature_names if name not in where]
        if missing:
            raise DataError(f"{path}: missing feature columns {missing}")
        cols = [where[name] for name in feature_names]
        rows = []
        for line, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != len(header):
                raise DataError(f"row {line}: expected {len(header)} cells, got {len(record)}")
            rows.append([_parse_float(record[j], line, header[j]) for j in cols])
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64).reshape(len(rows), len(cols))


def write_csv(d: Dataset, path: str | Path) -> None:
    """Write ``d`` so that :func:`load_csv` reproduces it bit-exactly."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.feature_names, d.target_name])
        for i in range(d.n):
            target = d.classes[d.y[i]] if d.task == CLASSIFICATION else repr(float(d.y[i]))
            w.writerow([repr(float(v)) for v in d.X[i]] + [target])


def split_train_test(d: Dataset, train_fraction: float, seed: int) -> SplitPlan:
    """Random train/test partition with ``round(train_fraction * n)`` training rows.

    The permutation is a SplitMix64 Fisher-Yates shuffle; the first rows of the
    shuffle form the training set. Both index lists are returned sorted.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = d.n
    n_train = int(math.floor(train_fraction * n + 0.5))
    if n_train < 1 or n_train > n - 1:
        raise DataError(f"train_fraction {train_fraction} on {n} rows leaves an empty side")
    perm = SplitMix64(seed).permutation(n)
    train = tuple(int(i) for i in np.sort(perm[:n_train]))
    test = tuple(int(i) for i in np.sort(perm[n_train:]))
    return SplitPlan(train, test, seed)


def standardize_target(train: Dataset, test: Dataset):
    """Center and scale both targets by the training mean and sample sd.

    Returns ``(train', test', mean, sd)``.
    """
    if train.task != REGRESSION or test.task != REGRESSION:
        raise DataError("only regression targets can be standardized")
    if train.n < 2:
        raise DataError("need at least 2 training rows to estimate sd")
    mean = float(np.mean(train.y))
    sd = float(np.std(train.y, ddof=1))
    if not sd > 0.0:
        raise DataError("training target has zero variance")
    return (train.with_target((train.y - mean) / sd),
            test.with_target((test.y - mean) / sd), mean, sd)
