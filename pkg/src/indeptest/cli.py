"""Command-line interface: test, power, runtime, calibrate, generate.

Exit codes: 0 success, 1 user error (bad flags, bad files, failed
calibration), 2 internal numerical failure. All randomness is governed by
--seed; reruns with identical flags and seed rewrite identical files.
Wall-clock measurements are the one exception: `power` therefore writes
null timing fields unless --record-timing is given, while `runtime` always
records them.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bench
from .bench import (
    PowerEstimate,
    RuntimeEstimate,
    estimate_power,
    load_csv,
    make_sampler,
    measure_runtime,
    run_test,
    wilson_interval,
    write_plotdata,
    write_results,
)
from .dataset import Dataset

_METHOD_CHOICES = list(bench.METHOD_NAMES)
_PROBLEM_PARAM = {"sinusoid": "omega", "gsign": "d", "null": "d", "csv": None}


def _int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def _method_list(text: str) -> list[str]:
    methods = [tok.strip() for tok in text.split(",") if tok.strip() != ""]
    for m in methods:
        if m not in _METHOD_CHOICES:
            raise argparse.ArgumentTypeError(f"unknown method {m!r} (choose from {_METHOD_CHOICES})")
    if not methods:
        raise argparse.ArgumentTypeError("empty method list")
    return methods


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="indeptest",
        description="Multivariate independence tests and benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run one test on a CSV dataset, print a JSON result")
    p_test.add_argument("--method", required=True, choices=_METHOD_CHOICES)
    p_test.add_argument("--data", required=True, help="headerless numeric CSV file")
    p_test.add_argument("--y-cols", required=True, help="zero-based Y column indices, e.g. '0' or '0,2'")
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--seed", type=int, default=0)
    p_test.add_argument("--standardize", action="store_true", help="standardize X columns")
    p_test.add_argument("--m", type=int, default=10, help="nyhsic/fohsic feature count")
    p_test.add_argument("--features", type=int, default=10, help="nfsic witness count")
    p_test.add_argument("--rstar", type=int, default=1, help="multifit exhaustive depth")
    p_test.add_argument("--perms", type=int, default=500, help="qhsic/nfsic permutation count")

    p_power = sub.add_parser("power", help="estimate power over a (param, n) grid")
    _add_grid_args(p_power)
    p_power.add_argument("--reps", type=int, default=200)
    p_power.add_argument("--out", required=True)
    p_power.add_argument("--format", choices=["json", "csv", "plotdata"], default="json")
    p_power.add_argument(
        "--record-timing",
        action="store_true",
        help="write measured mean runtimes (breaks byte-level reproducibility)",
    )

    p_rt = sub.add_parser("runtime", help="measure test wall time over an n grid")
    _add_grid_args(p_rt)
    p_rt.add_argument("--trials", type=int, default=10)
    p_rt.add_argument("--out", required=True)
    p_rt.add_argument("--format", choices=["json", "csv", "plotdata"], default="json")

    p_cal = sub.add_parser("calibrate", help="check null rejection rates at level alpha")
    p_cal.add_argument("--methods", type=_method_list, required=True)
    p_cal.add_argument("--n", type=int, default=500)
    p_cal.add_argument("--d", type=int, default=1, help="dimension of X and Y under the null")
    p_cal.add_argument("--reps", type=int, default=200)
    p_cal.add_argument("--alpha", type=float, default=0.05)
    p_cal.add_argument("--seed", type=int, default=0)
    p_cal.add_argument("--threads", type=int, default=1)
    _add_method_param_args(p_cal)

    p_gen = sub.add_parser("generate", help="write a synthetic dataset CSV (Y columns first)")
    p_gen.add_argument("--problem", required=True, choices=["sinusoid", "gsign", "null"])
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--omega", type=int, default=1, help="sinusoid frequency")
    p_gen.add_argument("--d", type=int, default=1, help="gsign/null dimension")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    return parser


def _add_grid_args(sub_parser) -> None:
    sub_parser.add_argument("--problem", required=True, choices=list(bench.PROBLEM_NAMES))
    sub_parser.add_argument("--param-grid", type=_int_list, default=[0],
                            help="omega values (sinusoid) or dimensions (gsign/null)")
    sub_parser.add_argument("--n-grid", type=_int_list, required=True)
    sub_parser.add_argument("--methods", type=_method_list, required=True)
    sub_parser.add_argument("--alpha", type=float, default=0.05)
    sub_parser.add_argument("--seed", type=int, default=0)
    sub_parser.add_argument("--threads", type=int, default=1)
    sub_parser.add_argument("--data", help="CSV file for --problem csv")
    sub_parser.add_argument("--y-cols", help="Y columns for --problem csv")
    sub_parser.add_argument("--standardize", action="store_true")
    _add_method_param_args(sub_parser)


def _add_method_param_args(sub_parser) -> None:
    sub_parser.add_argument("--m", type=int, default=10)
    sub_parser.add_argument("--features", type=int, default=10)
    sub_parser.add_argument("--rstar", type=int, default=1)
    sub_parser.add_argument("--perms", type=int, default=500)


def _method_params(args, method: str) -> dict:
    if method in ("nyhsic", "fohsic"):
        return {"m": args.m}
    if method == "nfsic":
        return {"n_features": args.features, "permutations": args.perms}
    if method == "multifit":
        return {"r_star": args.rstar}
    return {"permutations": args.perms}


def _sanitize(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return _sanitize(value.item())
    return value


def _load_problem_dataset(args) -> Dataset | None:
    if args.problem != "csv":
        return None
    if not args.data or args.y_cols is None:
        raise ValueError("--problem csv needs --data and --y-cols")
    return load_csv(args.data, args.y_cols, standardize=args.standardize)


def _problem_params(problem: str, param: int) -> dict:
    key = _PROBLEM_PARAM[problem]
    return {key: param} if key else {}


def _cmd_test(args) -> int:
    data = load_csv(args.data, args.y_cols, standardize=args.standardize)
    params = _method_params(args, args.method)
    result = run_test(args.method, data, args.alpha, args.seed, **params)
    print(json.dumps(_sanitize(result.to_dict()), sort_keys=True))
    return 0


def _cmd_power(args) -> int:
    dataset = _load_problem_dataset(args)
    results: list[PowerEstimate] = []
    cells = [(p, n, m) for p in args.param_grid for n in args.n_grid for m in args.methods]
    for done, (param, n, method) in enumerate(cells, start=1):
        results.append(
            estimate_power(
                method,
                args.problem,
                n=n,
                reps=args.reps,
                alpha=args.alpha,
                seed=args.seed,
                workers=args.threads,
                method_params=_method_params(args, method),
                problem_params=_problem_params(args.problem, param),
                dataset=dataset,
            )
        )
        print(f"power: cell {done}/{len(cells)} done", file=sys.stderr)
    if args.format == "plotdata":
        x_field = "n" if len(args.n_grid) > 1 else "param"
        written = write_plotdata(results, args.out, x_field, include_timing=args.record_timing)
        print(f"wrote {len(written)} panel files", file=sys.stderr)
    else:
        write_results(results, args.out, args.format, include_timing=args.record_timing)
    return 0


def _cmd_runtime(args) -> int:
    dataset = _load_problem_dataset(args)
    results: list[RuntimeEstimate] = []
    cells = [(p, n, m) for p in args.param_grid for n in args.n_grid for m in args.methods]
    for done, (param, n, method) in enumerate(cells, start=1):
        problem_params = _problem_params(args.problem, param)
        sampler = make_sampler(args.problem, problem_params, dataset)
        ds = sampler(n, np.random.SeedSequence((args.seed, n, param, 7)))
        mean_ms, median_ms = measure_runtime(
            method, ds, alpha=args.alpha, seed=args.seed,
            trials=args.trials, method_params=_method_params(args, method),
        )
        results.append(
            RuntimeEstimate(
                method=method,
                problem=args.problem,
                params=problem_params,
                n=n,
                trials=args.trials,
                mean_ms=mean_ms,
                median_ms=median_ms,
                seed=args.seed,
            )
        )
        print(f"runtime: cell {done}/{len(cells)} done", file=sys.stderr)
    if args.format == "plotdata":
        x_field = "n" if len(args.n_grid) > 1 else "param"
        write_plotdata(results, args.out, x_field)
    else:
        write_results(results, args.out, args.format)
    return 0


def _cmd_calibrate(args) -> int:
    se = math.sqrt(args.alpha * (1 - args.alpha) / args.reps)
    threshold = args.alpha + 3 * se
    all_ok = True
    for method in args.methods:
        est = estimate_power(
            method,
            "null",
            n=args.n,
            reps=args.reps,
            alpha=args.alpha,
            seed=args.seed,
            workers=args.threads,
            method_params=_method_params(args, method),
            problem_params={"d": args.d},
        )
        ok = est.power <= threshold
        all_ok = all_ok and ok
        print(
            f"{method}: rate {est.power:.4f} CI [{est.ci_low:.4f}, {est.ci_high:.4f}] "
            f"threshold {threshold:.4f} -> {'ok' if ok else 'FAIL'}"
        )
    return 0 if all_ok else 1


def _cmd_generate(args) -> int:
    sampler = make_sampler(args.problem, _problem_params(args.problem, args.omega if args.problem == "sinusoid" else args.d))
    ds = sampler(args.n, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.Y[i]] + [repr(float(v)) for v in ds.X[i]]
            fh.write(",".join(row))
            fh.write("\n")
    return 0


_COMMANDS = {
    "test": _cmd_test,
    "power": _cmd_power,
    "runtime": _cmd_runtime,
    "calibrate": _cmd_calibrate,
    "generate": _cmd_generate,
}


def run(argv=None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; map the latter to 1
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # numerical/internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
