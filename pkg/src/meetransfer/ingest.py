"""Time-series CSV ingestion: sliding windows and feature standardisation.

CSV dialect: comma separated, one header row, UTF-8, ``.`` decimal mark.
Each window covers ``window_size`` consecutive rows of one group and is
labelled with the label column at its last row. Windows are flattened
time-major, so feature ``f`` at step ``t`` lands in column
``t * n_features + f``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .synthdata import Dataset


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    window_size: int
    feature_columns: tuple[str, ...]
    label_column: str
    stride: int = 1
    group_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not self.feature_columns:
            raise ValueError("at least one feature column is required")
        if self.group_column is not None and (
            self.group_column in self.feature_columns or self.group_column == self.label_column
        ):
            raise ValueError("group column must differ from feature and label columns")


@dataclass(frozen=True)
class WindowedData:
    X: np.ndarray
    y: np.ndarray
    groups: np.ndarray
    spec: WindowSpec

    def __len__(self) -> int:
        return len(self.y)

    def as_dataset(self, role: str = "source") -> Dataset:
        return Dataset(self.X, self.y, role)


def n_windows(length: int, window: int, stride: int = 1) -> int:
    if length < window:
        return 0
    return (length - window) // stride + 1


def _read(path, columns: list[str]) -> tuple[dict[str, list[str]], int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestError(f"{path}: empty file") from None
        missing = [c for c in columns if c not in header]
        if missing:
            raise IngestError(f"{path}: missing column(s) {missing}")
        pos = {c: header.index(c) for c in columns}
        data: dict[str, list[str]] = {c: [] for c in columns}
        n = 0
        for n, row in enumerate(reader, start=1):
            for c, i in pos.items():
                data[c].append(row[i].strip() if i < len(row) else "")
    return data, n


def _numeric(path, name: str, values: list[str]) -> np.ndarray:
    out = np.empty(len(values))
    for i, v in enumerate(values):
        try:
            out[i] = float(v)
        except ValueError:
            raise IngestError(f"{path}: non-numeric value {v!r} in column {name!r} at data row {i + 1}") from None
        if not math.isfinite(out[i]):
            raise IngestError(f"{path}: non-finite value in column {name!r} at data row {i + 1}")
    return out


def load_csv(path, spec: WindowSpec) -> WindowedData:
    """Load ``path`` and cut it into labelled windows.

    Groups are contiguous runs of equal ``group_column`` values (the whole
    file when no group column is set); windows never cross a group
    boundary. Raises :class:`IngestError` for missing columns,
    non-numeric cells or when no group is long enough for one window.
    """
    cols = list(spec.feature_columns) + [spec.label_column]
    if spec.group_column:
        cols.append(spec.group_column)
    raw, n_rows = _read(path, cols)
    F = np.column_stack([_numeric(path, c, raw[c]) for c in spec.feature_columns]) if n_rows else np.zeros((0, len(spec.feature_columns)))
    label = _numeric(path, spec.label_column, raw[spec.label_column])
    group_vals = raw[spec.group_column] if spec.group_column else [""] * n_rows

    # contiguous runs of the group key
    bounds = [0] + [i for i in range(1, n_rows) if group_vals[i] != group_vals[i - 1]] + [n_rows]
    w, s = spec.window_size, spec.stride
    xs, ys, gs = [], [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        for start in range(a, b - w + 1, s):
            xs.append(F[start:start + w].ravel())
            ys.append(label[start + w - 1])
            gs.append(group_vals[start])
    if not xs:
        raise IngestError(f"{path}: no group has {w} rows; empty dataset")
    return WindowedData(np.array(xs), np.array(ys), np.array(gs), spec)


def export_csv(data: Dataset, path, *, feature_prefix: str = "x", label: str = "y") -> list[str]:
    """Write ``data`` as CSV with columns ``x0..x{d-1}, y``; returns the feature names.

    Values are written with ``repr`` so a reload is bit-exact.
    """
    d = data.X.shape[1]
    names = [f"{feature_prefix}{j}" for j in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names + [label])
        for xr, yv in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(yv))])
    return names


def save_windows(data: WindowedData, path) -> None:
    """Cache windows as flat CSV: ``f0..f{k-1}, label, group``."""
    k = data.X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(k)] + ["label", "group"])
        for xr, yv, g in zip(data.X, data.y, data.groups):
            w.writerow([repr(float(v)) for v in xr] + [repr(float(yv)), g])


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray


def fit_standardize(X) -> StandardizationStats:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty 2-D training matrix")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    constant = ~(std > 1e-12 * np.maximum(1.0, np.abs(mean)))
    return StandardizationStats(mean, np.where(constant, 1.0, std), constant)


def apply_standardize(stats: StandardizationStats, X) -> np.ndarray:
    """Scale with frozen stats; flagged constant features pass through unchanged."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != stats.mean.shape[0]:
        raise ValueError(f"expected {stats.mean.shape[0]} features, got {X.shape[1]}")
    Z = (X - stats.mean) / stats.std
    return np.where(stats.constant, X, Z)


def load_split(paths: dict, spec: WindowSpec) -> dict[str, Dataset]:
    """Load source / target_train / target_test files, standardised on the source."""
    loaded = {role: load_csv(Path(p), spec) for role, p in paths.items() if p}
    if "source" not in loaded:
        raise IngestError("a source file is required")
    stats = fit_standardize(loaded["source"].X)
    return {role: Dataset(apply_standardize(stats, w.X), w.y, role) for role, w in loaded.items()}
