"""Dataset ingestion (CSV) and a two-cluster synthetic generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_dataset(path) -> Dataset:
    """Read rows ``f1,...,fD,label``.

    Labels are -1/+1, or 0/1 with 0 mapped to -1; mixing -1 and 0 in one
    file is rejected as ambiguous. Blank lines are skipped and a first row
    with no numeric field is taken as a header. Errors name the 1-based line.
    """
    path = Path(path)
    rows, labels = [], []
    width = None
    raw_labels = set()
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row]
            if not row or all(c == "" for c in row):
                continue
            if not rows and lineno == 1 and not any(_is_number(c) for c in row):
                continue
            if len(row) < 2:
                raise DataError(f"line {lineno}: need at least one feature and a label")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"line {lineno}: expected {width - 1} features, got {len(row) - 1}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            feats, lab = vals[:-1], vals[-1]
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"line {lineno}: non-finite feature")
            if lab not in (-1.0, 0.0, 1.0):
                raise DataError(f"line {lineno}: label must be -1/+1 or 0/1, got {row[-1]!r}")
            raw_labels.add(lab)
            rows.append(feats)
            labels.append(lab)
    if not rows:
        raise DataError(f"{path}: no data rows")
    if {-1.0, 0.0} <= raw_labels:
        raise DataError(f"{path}: labels mix -1 and 0")
    y = np.array(labels)
    y[y == 0.0] = -1.0
    return Dataset(inputs=np.array(rows, dtype=float), labels=y)


def synthetic(n: int, d: int = 2, separation: float = 2.0, seed: int = 0) -> Dataset:
    """Two unit-variance Gaussian clusters whose means sit ``separation`` apart on axis 0.

    Labels alternate so the classes are balanced; features are then drawn
    from the class-conditional cluster.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng([int(seed), 7])
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.standard_normal((n, d))
    X[:, 0] += 0.5 * separation * y
    return Dataset(inputs=X, labels=y)


def save_dataset(ds: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        for x, lab in zip(ds.inputs, ds.labels):
            w.writerow([repr(float(v)) for v in x] + [int(lab)])
