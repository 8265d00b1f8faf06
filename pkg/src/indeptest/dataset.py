"""Paired-sample container shared by the samplers, tests, and benchmark harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Paired samples: row i of X and row i of Y are jointly drawn.

    X has shape (n, d_x) and Y has shape (n, d_y); all entries must be finite.
    """

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise ValueError("X and Y must be 2-D matrices")
        if X.shape[0] != Y.shape[0]:
            raise ValueError(
                f"X and Y must have the same number of rows, got {X.shape[0]} and {Y.shape[0]}"
            )
        if not np.isfinite(X).all() or not np.isfinite(Y).all():
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subsample(self, size: int, rng: np.random.Generator) -> "Dataset":
        """Rows drawn without replacement; order follows the draw."""
        if size > self.n:
            raise ValueError(f"cannot subsample {size} rows from {self.n}")
        idx = rng.choice(self.n, size=size, replace=False)
        return Dataset(self.X[idx], self.Y[idx])
