"""Multiscale Fisher independence test on dyadic rank-space rectangles.

Margins are rank-transformed to (0,1); for every (X-margin, Y-margin) pair a
coarse-to-fine tree of dyadic rectangles is explored. Each rectangle with
enough samples yields a 2x2 count table split at the interval midpoints,
tested with a mid-p Fisher exact test. Resolutions are processed in order
with a Holm correction per resolution at budget alpha / (R_max + 1), which
keeps the familywise level below alpha under early stopping. Rectangles are
halved one margin at a time; below depth r_star every tested rectangle is
expanded, beyond it only those with mid-p <= p_star.

The procedure is fully deterministic: identical inputs give bit-identical
reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import hypergeom, rankdata

from .result import TestResult

FISHER_TIE_REL_TOL = 1e-7


@dataclass(frozen=True)
class Cuboid:
    """Dyadic rectangle in rank space for one (X-margin, Y-margin) pair.

    The x interval is [x_cell * 2^-x_depth, (x_cell + 1) * 2^-x_depth) and
    likewise for y; resolution = x_depth + y_depth.
    """

    pair: tuple[int, int]
    x_depth: int
    x_cell: int
    y_depth: int
    y_cell: int

    def __post_init__(self):
        if self.x_depth < 0 or self.y_depth < 0:
            raise ValueError("depths must be non-negative")
        if not 0 <= self.x_cell < 2**self.x_depth:
            raise ValueError(f"x_cell {self.x_cell} outside depth {self.x_depth}")
        if not 0 <= self.y_cell < 2**self.y_depth:
            raise ValueError(f"y_cell {self.y_cell} outside depth {self.y_depth}")

    @property
    def resolution(self) -> int:
        return self.x_depth + self.y_depth

    @property
    def x_interval(self) -> tuple[float, float]:
        w = 0.5**self.x_depth
        return self.x_cell * w, (self.x_cell + 1) * w

    @property
    def y_interval(self) -> tuple[float, float]:
        w = 0.5**self.y_depth
        return self.y_cell * w, (self.y_cell + 1) * w

    def children(self) -> list["Cuboid"]:
        """Two x-halvings and two y-halvings, all at resolution + 1."""
        return [
            Cuboid(self.pair, self.x_depth + 1, 2 * self.x_cell, self.y_depth, self.y_cell),
            Cuboid(self.pair, self.x_depth + 1, 2 * self.x_cell + 1, self.y_depth, self.y_cell),
            Cuboid(self.pair, self.x_depth, self.x_cell, self.y_depth + 1, 2 * self.y_cell),
            Cuboid(self.pair, self.x_depth, self.x_cell, self.y_depth + 1, 2 * self.y_cell + 1),
        ]

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "x_interval": list(self.x_interval),
            "y_interval": list(self.y_interval),
            "resolution": self.resolution,
        }


@dataclass(frozen=True)
class Table2x2:
    """Counts for (x low/high) x (y low/high) within one cuboid."""

    n11: int
    n12: int
    n21: int
    n22: int

    def __post_init__(self):
        for v in (self.n11, self.n12, self.n21, self.n22):
            if v < 0:
                raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.n11 + self.n12 + self.n21 + self.n22

    def to_dict(self) -> dict:
        return {"n11": self.n11, "n12": self.n12, "n21": self.n21, "n22": self.n22}


@dataclass(frozen=True)
class MultiFitConfig:
    level: float = 0.05
    r_star: int = 1
    p_star: float = 0.01
    r_max: int | None = None  # None: floor(log2(n / 25)), floored at r_star
    min_count: int = 10
    early_stop: bool = True

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError("level must be in (0, 1)")
        if self.r_star < 0:
            raise ValueError("r_star must be >= 0")
        if not 0 < self.p_star < 1:
            raise ValueError("p_star must be in (0, 1)")
        if self.r_max is not None and self.r_max < self.r_star:
            raise ValueError("r_max must be >= r_star")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")

    def resolve_r_max(self, n: int) -> int:
        if self.r_max is not None:
            return self.r_max
        if n < 25:
            return self.r_star
        return max(self.r_star, int(math.floor(math.log2(n / 25))))


@dataclass(frozen=True)
class CuboidTest:
    cuboid: Cuboid
    table: Table2x2
    midp: float

    def to_dict(self) -> dict:
        return {"cuboid": self.cuboid.to_dict(), "table": self.table.to_dict(), "midp": self.midp}


@dataclass(frozen=True)
class ResolutionRecord:
    resolution: int
    tests: tuple[CuboidTest, ...]
    rejected_indices: tuple[int, ...]


@dataclass(frozen=True)
class MultiFitReport:
    resolutions: tuple[ResolutionRecord, ...] = ()
    resolution_reached: int = -1
    total_tests: int = 0
    rejected: tuple[CuboidTest, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "resolution_reached": self.resolution_reached,
            "total_tests": self.total_tests,
            "rejected": [t.to_dict() for t in self.rejected],
            "resolutions": [
                {
                    "resolution": rec.resolution,
                    "tests": [t.to_dict() for t in rec.tests],
                    "rejected_indices": list(rec.rejected_indices),
                }
                for rec in self.resolutions
            ],
        }


def rank_transform(column) -> np.ndarray:
    """(rank - 0.5) / n with average ranks for ties; values lie in (0, 1)."""
    col = np.asarray(column, dtype=float).ravel()
    if col.size < 1:
        raise ValueError("need at least one value")
    if not np.isfinite(col).all():
        raise ValueError("input contains non-finite values")
    return (rankdata(col, method="average") - 0.5) / col.size


def table_counts(x_ranks: np.ndarray, y_ranks: np.ndarray, cuboid: Cuboid) -> Table2x2:
    """2x2 counts of the samples inside the cuboid, split at the midpoints.

    Halves follow the half-open convention: low = [lo, mid), high = [mid, hi).
    """
    x = np.asarray(x_ranks, dtype=float)
    y = np.asarray(y_ranks, dtype=float)
    x_lo, x_hi = cuboid.x_interval
    y_lo, y_hi = cuboid.y_interval
    inside = (x >= x_lo) & (x < x_hi) & (y >= y_lo) & (y < y_hi)
    x_in = x[inside]
    y_in = y[inside]
    x_low = x_in < 0.5 * (x_lo + x_hi)
    y_low = y_in < 0.5 * (y_lo + y_hi)
    n11 = int(np.sum(x_low & y_low))
    n12 = int(np.sum(x_low & ~y_low))
    n21 = int(np.sum(~x_low & y_low))
    return Table2x2(n11, n12, n21, int(x_in.size) - n11 - n12 - n21)


def fisher_midp(table: Table2x2) -> float:
    """Two-sided Fisher exact mid-p via hypergeometric enumeration.

    Sums the probabilities of all tables (margins fixed) no more likely than
    the observed one, with a 1e-7 relative tolerance for ties, then subtracts
    half the observed table's probability. Returns 1 when a margin is zero.
    """
    row1 = table.n11 + table.n12
    row2 = table.n21 + table.n22
    col1 = table.n11 + table.n21
    total = table.total
    if row1 == 0 or row2 == 0 or col1 == 0 or col1 == total:
        return 1.0
    lo = max(0, col1 - row2)
    hi = min(col1, row1)
    support = np.arange(lo, hi + 1)
    pmf = hypergeom.pmf(support, total, col1, row1)
    p_obs = float(pmf[table.n11 - lo])
    two_sided = float(pmf[pmf <= p_obs * (1.0 + FISHER_TIE_REL_TOL)].sum())
    return min(two_sided - 0.5 * p_obs, 1.0)


def holm_reject(p_values, level: float):
    """Holm step-down; returns (any_rejected, sorted list of rejected indices).

    Ties in p are broken by original index, lower index first.
    """
    p = np.asarray(p_values, dtype=float)
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    m = p.size
    if m == 0:
        return False, []
    if p.min() < 0 or p.max() > 1:
        raise ValueError("p-values must lie in [0, 1]")
    order = np.lexsort((np.arange(m), p))
    rejected = []
    for rank, idx in enumerate(order):
        if p[idx] <= level / (m - rank):
            rejected.append(int(idx))
        else:
            break
    return bool(rejected), sorted(rejected)


def multifit_test(X, Y, config: MultiFitConfig | None = None):
    """Run the multiscale Fisher test; returns (TestResult, MultiFitReport).

    Every margin pair starts at the root rectangle. At each resolution all
    frontier rectangles holding at least min_count samples are tested and the
    collected mid-p values get a Holm correction at alpha / (R_max + 1); on a
    rejection with early_stop the scan ends there. Tested rectangles are
    expanded to their four children (deduplicated) unconditionally below
    r_star and only when mid-p <= p_star from r_star on.
    """
    start = time.perf_counter()
    config = config or MultiFitConfig()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.ndim != 2 or Y.ndim != 2:
        raise ValueError("X and Y must be matrices")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    n = X.shape[0]

    if n < config.min_count:
        report = MultiFitReport()
        runtime_ms = (time.perf_counter() - start) * 1e3
        result = TestResult(
            method="multifit",
            statistic=float("nan"),
            p_value=None,
            reject=False,
            level=config.level,
            n_used=n,
            runtime_ms=runtime_ms,
            details={"tests_performed": 0, "resolution_reached": -1},
        )
        return result, report

    x_ranks = np.column_stack([rank_transform(X[:, j]) for j in range(X.shape[1])])
    y_ranks = np.column_stack([rank_transform(Y[:, j]) for j in range(Y.shape[1])])

    r_max = config.resolve_r_max(n)
    alpha_r = config.level / (r_max + 1)

    frontier = [
        Cuboid((i, j), 0, 0, 0, 0)
        for i in range(X.shape[1])
        for j in range(Y.shape[1])
    ]
    seen = {c for c in frontier}

    records = []
    rejected_tests = []
    total_tests = 0
    resolution_reached = -1
    reject = False
    min_midp = float("inf")

    for r in range(r_max + 1):
        if not frontier:
            break
        tests = []
        for cuboid in frontier:
            table = table_counts(x_ranks[:, cuboid.pair[0]], y_ranks[:, cuboid.pair[1]], cuboid)
            if table.total < config.min_count:
                continue
            tests.append(CuboidTest(cuboid, table, fisher_midp(table)))
        if tests:
            resolution_reached = r
            total_tests += len(tests)
            min_midp = min(min_midp, min(t.midp for t in tests))
            any_rej, idxs = holm_reject([t.midp for t in tests], alpha_r)
            records.append(ResolutionRecord(r, tuple(tests), tuple(idxs)))
            if any_rej:
                reject = True
                rejected_tests.extend(tests[i] for i in idxs)
                if config.early_stop:
                    break
        # expansion: unconditional below r_star, p_star-gated from there on
        next_frontier = []
        for t in tests:
            if r < config.r_star or t.midp <= config.p_star:
                for child in t.cuboid.children():
                    if child not in seen:
                        seen.add(child)
                        next_frontier.append(child)
        frontier = next_frontier

    report = MultiFitReport(
        resolutions=tuple(records),
        resolution_reached=resolution_reached,
        total_tests=total_tests,
        rejected=tuple(rejected_tests),
    )
    runtime_ms = (time.perf_counter() - start) * 1e3
    result = TestResult(
        method="multifit",
        statistic=min_midp if total_tests else float("nan"),
        p_value=None,
        reject=reject,
        level=config.level,
        n_used=n,
        runtime_ms=runtime_ms,
        details={
            "tests_performed": total_tests,
            "resolution_reached": resolution_reached,
            "r_star": config.r_star,
            "r_max": r_max,
            "rejected_cuboids": len(rejected_tests),
            "early_stop": config.early_stop,
        },
    )
    return result, report
