"""Power and runtime estimation over repeated simulations, plus data I/O.

Repetition r of a power run draws its dataset and test seed from substreams
hashed out of (root seed, r, purpose tag), so rejection counts are identical
for any worker count. Power uncertainty is reported as a 95% Wilson interval.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .hsic import NfsicConfig, approx_hsic_test, nfsic_test, qhsic_test
from .multifit import MultiFitConfig, multifit_test
from .result import TestResult
from .synth import (
    GaussianSignConfig,
    SinusoidConfig,
    sample_gaussian_sign,
    sample_independent_null,
    sample_sinusoid,
)

_Z95 = 1.959963984540054
_DATA_TAG = 101
_TEST_TAG = 202

METHOD_NAMES = ("qhsic", "nyhsic", "fohsic", "nfsic", "multifit")
PROBLEM_NAMES = ("sinusoid", "gsign", "null", "csv")


def wilson_interval(successes: int, trials: int, z: float = _Z95) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / trials + z * z / (4 * trials * trials)) / denom
    # the Wilson interval contains p_hat; keep that true under round-off
    low = min(max(center - half, 0.0), p_hat)
    high = max(min(center + half, 1.0), p_hat)
    return low, high


@dataclass(frozen=True)
class PowerEstimate:
    method: str
    problem: str
    params: dict
    n: int
    reps: int
    rejections: int
    power: float
    ci_low: float
    ci_high: float
    mean_runtime_ms: float
    alpha: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.power <= 1.0:
            raise ValueError("power must lie in [0, 1]")
        if not self.ci_low <= self.power <= self.ci_high:
            raise ValueError("Wilson interval must contain the point estimate")

    def to_record(self, include_timing: bool = True) -> dict:
        return {
            "method": self.method,
            "problem": self.problem,
            "params": dict(self.params),
            "n": self.n,
            "reps": self.reps,
            "power": self.power,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "mean_runtime_ms": self.mean_runtime_ms if include_timing else None,
            "seed": self.seed,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class RuntimeEstimate:
    method: str
    problem: str
    params: dict
    n: int
    trials: int
    mean_ms: float
    median_ms: float
    seed: int = 0
    times_ms: tuple = field(default=(), repr=False)

    def to_record(self, include_timing: bool = True) -> dict:
        return {
            "method": self.method,
            "problem": self.problem,
            "params": dict(self.params),
            "n": self.n,
            "trials": self.trials,
            "mean_ms": self.mean_ms,
            "median_ms": self.median_ms,
            "seed": self.seed,
        }


def run_test(method: str, dataset: Dataset, alpha: float, seed, **params) -> TestResult:
    """Dispatch a named test with its per-method parameters."""
    if method == "qhsic":
        return qhsic_test(
            dataset.X, dataset.Y, alpha, permutations=params.get("permutations", 500), seed=seed
        )
    if method in ("nyhsic", "fohsic"):
        return approx_hsic_test(
            dataset.X,
            dataset.Y,
            alpha,
            kind="nystrom" if method == "nyhsic" else "fourier",
            m=params.get("m", 10),
            null_draws=params.get("null_draws", 2000),
            seed=seed,
        )
    if method == "nfsic":
        config = NfsicConfig(
            n_features=params.get("n_features", 10),
            permutations=params.get("permutations", 500),
            search_budget=params.get("search_budget", 200),
            ridge=params.get("ridge", 1e-5),
        )
        return nfsic_test(dataset.X, dataset.Y, alpha, config, seed=seed)
    if method == "multifit":
        config = MultiFitConfig(
            level=alpha,
            r_star=params.get("r_star", 1),
            p_star=params.get("p_star", 0.01),
            r_max=params.get("r_max"),
            min_count=params.get("min_count", 10),
            early_stop=params.get("early_stop", True),
        )
        return multifit_test(dataset.X, dataset.Y, config)[0]
    raise ValueError(f"unknown method {method!r} (choose from {METHOD_NAMES})")


def make_sampler(problem: str, params: dict | None = None, dataset: Dataset | None = None):
    """Return a callable (n, seed) -> Dataset for a named problem.

    problem="csv" subsamples rows without replacement from a pre-loaded
    Dataset (pass it via the dataset argument).
    """
    params = dict(params or {})
    if problem == "sinusoid":
        omega = int(params.get("omega", 1))
        return lambda n, seed: sample_sinusoid(SinusoidConfig(omega, n), seed)
    if problem == "gsign":
        d = int(params.get("d", 1))
        return lambda n, seed: sample_gaussian_sign(GaussianSignConfig(d, n), seed)
    if problem == "null":
        d_x = int(params.get("d_x", params.get("d", 1)))
        d_y = int(params.get("d_y", params.get("d", 1)))
        return lambda n, seed: sample_independent_null(n, d_x, d_y, seed)
    if problem == "csv":
        if dataset is None:
            raise ValueError("problem 'csv' needs a loaded dataset")
        return lambda n, seed: dataset.subsample(n, np.random.default_rng(seed))
    raise ValueError(f"unknown problem {problem!r} (choose from {PROBLEM_NAMES})")


def _rep_seeds(seed: int, rep: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    data_seq = np.random.SeedSequence((seed, rep, _DATA_TAG))
    test_seq = np.random.SeedSequence((seed, rep, _TEST_TAG))
    return data_seq, test_seq


def estimate_power(
    method,
    problem,
    n: int,
    reps: int,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
    method_params: dict | None = None,
    problem_params: dict | None = None,
    dataset: Dataset | None = None,
) -> PowerEstimate:
    """Rejection rate of a test over `reps` fresh datasets of size n.

    `method` is a method name (see run_test) or a callable
    (dataset, alpha, seed) -> TestResult; `problem` is a problem name (see
    make_sampler) or a callable (n, seed) -> Dataset. Each repetition uses
    its own substreams, so results do not depend on `workers`.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    method_params = dict(method_params or {})
    if callable(method):
        method_name = getattr(method, "__name__", "custom")
        run = method
    else:
        method_name = method
        run = lambda ds, a, s: run_test(method_name, ds, a, s, **method_params)
    if callable(problem):
        problem_name = getattr(problem, "__name__", "custom")
        sampler = problem
    else:
        problem_name = problem
        sampler = make_sampler(problem, problem_params, dataset)

    def one_rep(rep: int) -> tuple[bool, float]:
        data_seq, test_seq = _rep_seeds(seed, rep)
        ds = sampler(n, data_seq)
        t0 = time.perf_counter()
        result = run(ds, alpha, test_seq)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        return bool(result.reject), elapsed_ms

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one_rep, range(reps)))
    else:
        outcomes = [one_rep(r) for r in range(reps)]

    rejections = sum(1 for rej, _ in outcomes if rej)
    mean_runtime = float(np.mean([t for _, t in outcomes]))
    ci_low, ci_high = wilson_interval(rejections, reps)
    return PowerEstimate(
        method=method_name,
        problem=problem_name,
        params={**(problem_params or {}), **({"method_params": method_params} if method_params else {})},
        n=n,
        reps=reps,
        rejections=rejections,
        power=rejections / reps,
        ci_low=ci_low,
        ci_high=ci_high,
        mean_runtime_ms=mean_runtime,
        alpha=alpha,
        seed=seed,
    )


def measure_runtime(
    method,
    dataset: Dataset,
    alpha: float = 0.05,
    seed: int = 0,
    trials: int = 10,
    method_params: dict | None = None,
) -> tuple[float, float]:
    """Mean and median wall-clock milliseconds of the test on a fixed dataset.

    Runs strictly sequentially and excludes data generation. Returns
    (mean_ms, median_ms).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    method_params = dict(method_params or {})
    if callable(method):
        run = method
    else:
        run = lambda ds, a, s: run_test(method, ds, a, s, **method_params)
    times = np.empty(trials)
    for t in range(trials):
        t0 = time.perf_counter()
        run(dataset, alpha, seed)
        times[t] = (time.perf_counter() - t0) * 1e3
    return float(times.mean()), float(np.median(times))


# ---------------------------------------------------------------------------
# dataset and result I/O


def load_csv(path, y_cols, standardize: bool = False) -> Dataset:
    """Load a headerless numeric CSV; y_cols picks the Y columns by index.

    y_cols is a zero-based index list ("0" or [0, 2]); the remaining columns
    become X in their original order. With standardize=True every X column is
    centered and scaled to unit variance (zero-variance columns are centered
    only). Malformed rows raise ValueError naming the line number.
    """
    if isinstance(y_cols, str):
        try:
            y_idx = [int(tok) for tok in y_cols.split(",") if tok.strip() != ""]
        except ValueError as exc:
            raise ValueError(f"bad y-column spec {y_cols!r}") from exc
    else:
        y_idx = [int(c) for c in y_cols]
    if not y_idx:
        raise ValueError("y-column spec selects no columns")
    if len(set(y_idx)) != len(y_idx):
        raise ValueError("y-column spec repeats a column")

    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                if width is None:
                    continue
                raise ValueError(f"{path}: blank line {lineno} inside data")
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ValueError(
                    f"{path}: line {lineno} has {len(parts)} columns, expected {width}"
                )
            try:
                rows.append([float(tok) for tok in parts])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno} has a non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: file is empty")

    data = np.asarray(rows, dtype=float)
    bad = [c for c in y_idx if not 0 <= c < data.shape[1]]
    if bad:
        raise ValueError(f"y columns {bad} out of range for {data.shape[1]} columns")
    x_idx = [c for c in range(data.shape[1]) if c not in y_idx]
    if not x_idx:
        raise ValueError("y-column spec leaves no X columns")
    X = data[:, x_idx]
    Y = data[:, y_idx]
    if standardize:
        X = X - X.mean(axis=0)
        std = X.std(axis=0)
        nonzero = std > 0
        X[:, nonzero] /= std[nonzero]
    return Dataset(X, Y)


def _records(results, include_timing: bool) -> list[dict]:
    out = []
    for r in results:
        if hasattr(r, "to_record"):
            out.append(r.to_record(include_timing=include_timing))
        else:
            out.append(dict(r))
    return out


def write_results(results, path, fmt: str = "json", include_timing: bool = True) -> None:
    """Serialize result records to JSON or CSV (same fields either way)."""
    records = _records(results, include_timing)
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        if records:
            fields = list(records[0].keys())
        else:  # header-only file with the power schema
            fields = ["method", "problem", "params", "n", "reps", "power",
                      "ci_low", "ci_high", "mean_runtime_ms", "seed", "alpha"]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for rec in records:
                writer.writerow(
                    [json.dumps(rec[f], sort_keys=True) if isinstance(rec[f], dict) else rec[f] for f in fields]
                )
    else:
        raise ValueError(f"unknown format {fmt!r} (json or csv)")


def write_plotdata(results, path_prefix, x_field: str, include_timing: bool = True) -> list[str]:
    """One CSV per figure panel: columns (x_value, method, value, ci_low, ci_high).

    x_field chooses the panel x-axis: "n" panels per parameter set with n on
    the x-axis, "param" panels per n with the first problem parameter on the
    x-axis. Runtime records repeat their mean in the CI columns.
    """
    if x_field not in ("n", "param"):
        raise ValueError("x_field must be 'n' or 'param'")
    records = _records(results, include_timing)
    panels: dict[str, list] = {}
    for rec in records:
        params = {k: v for k, v in rec.get("params", {}).items() if k != "method_params"}
        param_label = "-".join(f"{k}{v}" for k, v in sorted(params.items())) or "all"
        if x_field == "n":
            panel = f"{rec['problem']}_{param_label}"
            x_value = rec["n"]
        else:
            panel = f"{rec['problem']}_n{rec['n']}"
            x_value = next(iter(params.values()), 0)
        if "power" in rec:
            row = (x_value, rec["method"], rec["power"], rec["ci_low"], rec["ci_high"])
        else:
            row = (x_value, rec["method"], rec["mean_ms"], rec["mean_ms"], rec["mean_ms"])
        panels.setdefault(panel, []).append(row)

    written = []
    for panel, rows in sorted(panels.items()):
        out_path = f"{path_prefix}_{panel}.csv"
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_value", "method", "power_or_runtime", "ci_low", "ci_high"])
            for row in sorted(rows, key=lambda r: (str(r[1]), float(r[0]))):
                writer.writerow(row)
        written.append(out_path)
    return written
