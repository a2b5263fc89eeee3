"""Datasets, CSV ingestion, bounds and adjacent-dataset construction."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"
TASKS = (CLASSIFICATION, REGRESSION)


class DataError(ValueError):
    """Raised for malformed input files or invalid dataset operations."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable feature matrix plus targets and per-column bounds.

    ``bounds`` has shape ``(n_cols, 2)`` holding ``[lo, hi]`` per feature.
    ``n_classes`` is fixed by the full dataset so that row removal never
    changes the label space.
    """

    features: np.ndarray
    targets: np.ndarray
    task: str
    bounds: np.ndarray
    target_bounds: tuple[float, float]
    columns: tuple[str, ...] = ()
    target_name: str = "y"
    bounds_policy: str = "from-data"
    n_classes: int = 0
    bounds_provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] < 1:
            raise DataError("dataset must have at least one row")
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.task == CLASSIFICATION:
            y = np.asarray(self.targets)
            if not np.all(np.equal(np.mod(y, 1), 0)) or np.any(y < 0):
                raise DataError("classification targets must be non-negative integers")
            y = y.astype(np.int64)
            n_classes = self.n_classes or int(y.max()) + 1
            if y.max() >= n_classes:
                raise DataError("classification target outside [0, n_classes)")
            object.__setattr__(self, "n_classes", n_classes)
        else:
            y = np.asarray(self.targets, dtype=float)
        if y.shape != (X.shape[0],):
            raise DataError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (X.shape[1], 2) or np.any(b[:, 0] > b[:, 1]):
            raise DataError("bounds must be an (n_cols, 2) array with lo <= hi")
        lo, hi = (float(v) for v in self.target_bounds)
        if lo > hi:
            raise DataError("target bounds must satisfy lo <= hi")
        columns = tuple(self.columns) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(columns) != X.shape[1]:
            raise DataError("column names do not match feature count")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "targets", _frozen(y))
        object.__setattr__(self, "bounds", _frozen(b))
        object.__setattr__(self, "target_bounds", (lo, hi))
        object.__setattr__(self, "columns", columns)

    @classmethod
    def from_arrays(cls, X, y, task=REGRESSION, bounds=None, target_bounds=None, **kw) -> Dataset:
        """Build a dataset, deriving any missing bounds from the data."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y)
        if bounds is None:
            bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
        if target_bounds is None:
            target_bounds = (float(np.min(y)), float(np.max(y)))
        return cls(X, y, task, bounds, target_bounds, **kw)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def widths(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    def _derive(self, X: np.ndarray, y: np.ndarray) -> Dataset:
        # Skips validation: used on hot paths where X, y come from a valid dataset.
        new = object.__new__(Dataset)
        for name, value in self.__dict__.items():
            object.__setattr__(new, name, value)
        object.__setattr__(new, "features", _frozen(X))
        object.__setattr__(new, "targets", _frozen(y))
        return new

    def take(self, rows: Sequence[int] | np.ndarray) -> Dataset:
        rows = np.asarray(rows, dtype=np.int64)
        return self._derive(self.features[rows], self.targets[rows])

    def with_rows(self, X: np.ndarray, y: np.ndarray) -> Dataset:
        """Same bounds and metadata, new rows (e.g. after resampling)."""
        return self._derive(np.asarray(X, dtype=float), np.asarray(y, dtype=self.targets.dtype))

    def summary(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "task": self.task,
            "columns": list(self.columns),
            "target": self.target_name,
            "bounds_policy": self.bounds_policy,
            "bounds": {c: [float(lo), float(hi)] for c, (lo, hi) in zip(self.columns, self.bounds)},
            "target_bounds": list(self.target_bounds),
        }


@dataclass(frozen=True)
class AdjacencySpec:
    """Rows removed from the full dataset; ``k == 0`` is the full dataset."""

    removed_indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.removed_indices))
        if len(set(idx)) != len(idx):
            raise DataError(f"duplicate removal indices in {idx}")
        if idx and idx[0] < 0:
            raise DataError("removal indices must be non-negative")
        object.__setattr__(self, "removed_indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int] = ()) -> AdjacencySpec:
        return cls(tuple(indices))

    @property
    def k(self) -> int:
        return len(self.removed_indices)

    @property
    def is_full(self) -> bool:
        return not self.removed_indices

    def key(self) -> tuple[int, ...]:
        """Integer key identifying this adjacency for stream derivation."""
        return (self.k, *self.removed_indices)

    def describe(self) -> str:
        if self.is_full:
            return "D"
        return "D\\{" + ",".join(map(str, self.removed_indices)) + "}"


def remove_rows(d: Dataset, spec: AdjacencySpec) -> Dataset:
    """Drop ``spec.removed_indices`` keeping the remaining rows in order.

    Bounds are those of the full dataset.
    """
    if spec.is_full:
        return d
    idx = spec.removed_indices
    if idx[-1] >= d.n_rows:
        raise DataError(f"removal index {idx[-1]} out of range for {d.n_rows} rows")
    if len(idx) >= d.n_rows:
        raise DataError("cannot remove every row")
    keep = np.ones(d.n_rows, dtype=bool)
    keep[list(idx)] = False
    return d._derive(d.features[keep], d.targets[keep])


def clip_to_bounds(d: Dataset) -> Dataset:
    X = np.clip(d.features, d.bounds[:, 0], d.bounds[:, 1])
    y = d.targets
    if d.task == REGRESSION:
        y = np.clip(y, *d.target_bounds)
    if np.array_equal(X, d.features) and np.array_equal(y, d.targets):
        return d
    return d._derive(X, y)


def _parse_cell(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: non-finite value {text!r} in column {column!r}")
    return value


def load_csv(
    path: str | Path,
    target_column: str,
    task: str = REGRESSION,
    bounds_policy: str = "from-data",
    bounds_path: str | Path | None = None,
) -> Dataset:
    """Read a header-first numeric CSV into a :class:`Dataset`.

    With ``bounds_policy="explicit"``, bounds come from a JSON sidecar
    ``{column: [lo, hi]}`` that must cover every feature column; a missing
    target entry falls back to the data range.
    """
    if bounds_policy not in ("from-data", "explicit"):
        raise DataError(f"unknown bounds policy {bounds_policy!r}")
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            rows.append([_parse_cell(c.strip(), line, h) for c, h in zip(row, header)])
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    t = header.index(target_column)
    feature_cols = [h for i, h in enumerate(header) if i != t]
    X = np.delete(table, t, axis=1)
    y = table[:, t]

    provenance = {c: "from-data" for c in feature_cols + [target_column]}
    bounds = np.column_stack([X.min(axis=0), X.max(axis=0)])
    target_bounds = (float(y.min()), float(y.max()))
    if bounds_policy == "explicit":
        if bounds_path is None:
            raise DataError("explicit bounds policy requires a bounds file")
        try:
            spec = json.loads(Path(bounds_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read bounds file {bounds_path}: {exc}") from exc
        if not isinstance(spec, dict):
            raise DataError(f"bounds file {bounds_path} must map column names to [lo, hi]")
        missing = [c for c in feature_cols if c not in spec]
        if missing:
            raise DataError(f"bounds file missing columns {missing}")
        for j, c in enumerate(feature_cols):
            lo, hi = (float(v) for v in spec[c])
            bounds[j] = (lo, hi)
            provenance[c] = "explicit"
        if target_column in spec:
            target_bounds = tuple(float(v) for v in spec[target_column])
            provenance[target_column] = "explicit"
    return Dataset(
        X,
        y,
        task,
        bounds,
        target_bounds,
        columns=tuple(feature_cols),
        target_name=target_column,
        bounds_policy=bounds_policy,
        bounds_provenance=provenance,
    )


def write_csv(d: Dataset, path: str | Path) -> None:
    """Serialize rows as CSV with the target as the last column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*d.columns, d.target_name])
        for x, y in zip(d.features, d.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(y.item())])
