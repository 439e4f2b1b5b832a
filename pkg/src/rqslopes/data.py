"""Response/design container and CSV ingestion."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class RankDeficiencyError(ValueError):
    """The design augmented with an intercept column is not of full rank."""


class SchemaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations ``y`` and slope covariates ``X`` (n x p, no intercept column)."""

    y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.empty((y.size, 0))
        if X.shape[0] != y.size:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("dataset contains non-finite values")
        n, p = X.shape
        if n <= p + 1:
            raise ValueError(f"need n > p + 1 observations, got n={n}, p={p}")
        const = np.flatnonzero(np.ptp(X, axis=0) == 0) if p else []
        if len(const):
            raise RankDeficiencyError(
                f"covariate column(s) {list(const)} are constant; the intercept is implicit"
            )
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def design(self) -> np.ndarray:
        """``[1, X]``, the design including the intercept column."""
        return np.column_stack([np.ones(self.n), self.X])

    @property
    def x_bar(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def x_centered(self) -> np.ndarray:
        return self.X - self.x_bar

    def check_rank(self):
        rank = np.linalg.matrix_rank(self.design)
        if rank < self.p + 1:
            raise RankDeficiencyError(
                f"design with intercept has rank {rank} < p + 1 = {self.p + 1}"
            )

    def with_response(self, y) -> "Dataset":
        return Dataset(y, self.X)


def read_csv(path, response: str = "y") -> tuple[Dataset, list[str]]:
    """Load a dataset from a headed CSV file.

    The column named ``response`` is the response; every other column is a
    covariate. Returns the dataset and the covariate names in file order.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if response not in header:
            raise SchemaError(f"{path}: no response column {response!r} in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            values = []
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell == "" or cell.lower() in {"na", "nan", "null"}:
                    raise SchemaError(f"{path}:{lineno}: missing value in column {name!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise SchemaError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {name!r}"
                    ) from None
                if not np.isfinite(v):
                    raise SchemaError(f"{path}:{lineno}: non-finite value in column {name!r}")
                values.append(v)
            rows.append(values)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    table = np.array(rows)
    j = header.index(response)
    covariates = [h for i, h in enumerate(header) if i != j]
    X = np.delete(table, j, axis=1)
    return Dataset(table[:, j], X), covariates


def write_csv(path, data: Dataset, names=None, response: str = "y"):
    names = names or [f"x{j + 1}" for j in range(data.p)]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([response, *names])
        for yi, xi in zip(data.y, data.X):
            w.writerow([repr(float(yi)), *(repr(float(v)) for v in xi)])
