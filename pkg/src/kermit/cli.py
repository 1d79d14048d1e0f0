"""Command-line harness: gen, complete, trc, and experiment subcommands.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.  The KERMIT_THREADS environment variable caps experiment
parallelism (0 = one worker per CPU; unset = single-threaded).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio
from .complexity import HypothesisClassSpec, trc_bound, trc_monte_carlo
from .errors import DataError, NumericalError
from .experiments import (
    ExperimentConfig,
    SOLVERS,
    build_experiment_kernel,
    generate_synthetic,
    run_experiment,
)
from .kernels import KernelMatrix, KroneckerKernel, factorize
from .sampling import ObservationVector, uniform_split
from .solvers import (
    AlsConfig,
    kkmcex_fit,
    kkmcex_predict,
    kmc_als_fit,
    mc_als_fit,
)
from .complexity import generalization_error


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


_CONFIG_KEYS = (
    "sizes",
    "m",
    "u",
    "p",
    "snr",
    "realizations",
    "mu_grid",
    "cv_folds",
    "seed",
    "solvers",
    "weight_profile",
    "normalize_row_power",
    "als_max_iters",
    "als_tol",
)


def _parse_snr(value) -> float:
    if isinstance(value, str):
        value = float(value)
    return float(value)


def _int_list(text: str) -> list:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _load_kernel(path) -> KernelMatrix:
    entries = fileio.read_matrix(path)
    try:
        return KernelMatrix(entries)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _threads_from_env() -> int:
    raw = os.environ.get("KERMIT_THREADS")
    if raw is None or not raw.strip():
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"KERMIT_THREADS must be an integer, got {raw!r}")
    if value < 0:
        raise UsageError("KERMIT_THREADS must be nonnegative")
    return (os.cpu_count() or 1) if value == 0 else value


def cmd_gen(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_rows = args.size
    n_cols = args.cols if args.cols is not None else args.size
    u = args.u if args.u is not None else n_rows * n_cols - args.m
    kw = build_experiment_kernel(n_rows, args.profile, not args.raw_weights)
    kh = (
        kw
        if n_cols == n_rows
        else build_experiment_kernel(n_cols, args.profile, not args.raw_weights)
    )
    streams = np.random.SeedSequence(args.seed).spawn(2)
    instance = generate_synthetic(n_rows, args.p, args.snr, (kw, kh), streams[0])
    split = uniform_split(n_rows, n_cols, args.m, u, streams[1])
    fileio.write_matrix(out / "M.mat", instance.M)
    fileio.write_matrix(out / "F.mat", instance.F)
    fileio.write_split(out / "split.csv", split)
    meta = {
        "n_rows": n_rows,
        "n_cols": n_cols,
        "p": args.p,
        "snr": fileio.format_float(args.snr),
        "m": args.m,
        "u": u,
        "seed": args.seed,
        "weight_profile": args.profile,
        "normalize_row_power": not args.raw_weights,
    }
    (out / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return 0


def _complete_estimate(args, split, obs):
    als_cfg = AlsConfig(max_iters=args.max_iters, tol=args.tol, seed=args.als_seed)
    if args.solver == "mc":
        return mc_als_fit(obs, split, args.p, args.mu, als_cfg)
    if args.solver == "kmc":
        if args.kernel_w is None or args.kernel_h is None:
            raise UsageError("--solver kmc needs --kernel-w and --kernel-h")
        kw = _load_kernel(args.kernel_w)
        kh = _load_kernel(args.kernel_h)
        if kw.dim != split.n_rows:
            raise DataError(
                f"{args.kernel_w}: kernel dim {kw.dim} does not match "
                f"{args.split}: grid rows {split.n_rows}"
            )
        if kh.dim != split.n_cols:
            raise DataError(
                f"{args.kernel_h}: kernel dim {kh.dim} does not match "
                f"{args.split}: grid cols {split.n_cols}"
            )
        return kmc_als_fit(obs, split, kw, kh, args.p, args.mu, als_cfg)
    if args.kernel_f is not None:
        kf = _load_kernel(args.kernel_f)
        if kf.dim != split.n_rows * split.n_cols:
            raise DataError(
                f"{args.kernel_f}: kernel dim {kf.dim} does not match "
                f"{args.split}: grid size {split.n_rows * split.n_cols}"
            )
    elif args.kernel_w is not None and args.kernel_h is not None:
        kf = KroneckerKernel(kh=_load_kernel(args.kernel_h), kw=_load_kernel(args.kernel_w))
        if kf.dim != split.n_rows * split.n_cols:
            raise DataError(
                f"{args.kernel_w}, {args.kernel_h}: Kronecker dim {kf.dim} does "
                f"not match {args.split}: grid size {split.n_rows * split.n_cols}"
            )
    else:
        raise UsageError("--solver kkmcex needs --kernel-f or --kernel-w/--kernel-h")
    return kkmcex_predict(kkmcex_fit(obs, split, kf, args.mu))


def cmd_complete(args) -> int:
    matrix = fileio.read_matrix(args.matrix)
    split = fileio.read_split(args.split)
    if matrix.shape != (split.n_rows, split.n_cols):
        raise DataError(
            f"{args.matrix}: matrix shape {matrix.shape} does not match "
            f"{args.split}: grid {split.n_rows}x{split.n_cols}"
        )
    obs = ObservationVector.from_matrix(matrix, split)
    estimate = _complete_estimate(args, split, obs)
    train, test, ge = generalization_error(matrix, estimate.F_hat, split)
    fileio.write_matrix(args.out, estimate.F_hat)
    if args.model_out:
        meta = {"mu": fileio.format_float(args.mu), "seed": args.als_seed}
        if args.solver != "kkmcex":
            meta["p"] = args.p
        fileio.write_model(args.model_out, estimate, meta)
    print(
        f"{fileio.format_float(train)} {fileio.format_float(test)} "
        f"{fileio.format_float(ge)}"
    )
    return 0


def _trc_spec(args, split) -> HypothesisClassSpec:
    def need(flag, value):
        if value is None:
            raise UsageError(f"--class {args.klass} needs {flag}")
        return value

    if args.klass == "base_mc":
        return HypothesisClassSpec.base_mc(need("--t", args.t))
    if args.klass == "kernel_mc":
        kw = _load_kernel(need("--kernel-w", args.kernel_w))
        kh = _load_kernel(need("--kernel-h", args.kernel_h))
        return HypothesisClassSpec.kernel_mc(need("--t-b", args.t_b), kw, kh)
    if args.klass == "inductive":
        kw = _load_kernel(need("--kernel-w", args.kernel_w))
        kh = _load_kernel(need("--kernel-h", args.kernel_h))
        return HypothesisClassSpec.inductive(
            need("--t-w", args.t_w),
            need("--t-h", args.t_h),
            factorize(kw),
            factorize(kh),
        )
    if args.kernel_f is not None:
        kf = _load_kernel(args.kernel_f)
    elif args.kernel_w is not None and args.kernel_h is not None:
        kf = KroneckerKernel(kh=_load_kernel(args.kernel_h), kw=_load_kernel(args.kernel_w))
    else:
        raise UsageError("--class kkmcex needs --kernel-f or --kernel-w/--kernel-h")
    return HypothesisClassSpec.kkmcex(need("--b", args.b), kf, split)


def cmd_trc(args) -> int:
    split = fileio.read_split(args.split)
    spec = _trc_spec(args, split)
    result = trc_monte_carlo(
        spec, split, draws=args.draws, seed=args.seed, exhaustive=args.exhaustive
    )
    result.bound = trc_bound(spec, split, G=args.g)
    print(fileio.format_trc_row(spec, split, result))
    return 0


def _load_experiment_config(args) -> ExperimentConfig:
    merged = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise DataError(f"{args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise UsageError(f"{args.config}: config must be a JSON object")
        for key in raw:
            if key not in _CONFIG_KEYS:
                raise UsageError(f"{args.config}: unknown config key: {key}")
        merged.update(raw)
    overrides = {
        "sizes": _int_list(args.sizes) if args.sizes else None,
        "m": args.m,
        "u": args.u,
        "p": args.p,
        "snr": args.snr,
        "realizations": args.realizations,
        "cv_folds": args.cv_folds,
        "seed": args.seed,
        "solvers": args.solvers.split(",") if args.solvers else None,
        "weight_profile": args.profile,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "snr" in merged:
        merged["snr"] = _parse_snr(merged["snr"])
    try:
        return ExperimentConfig(**merged)
    except DataError as exc:
        raise UsageError(f"invalid experiment config: {exc}") from exc


def cmd_experiment(args) -> int:
    cfg = _load_experiment_config(args)
    threads = _threads_from_env()
    result = run_experiment(cfg, threads=threads)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    fileio.write_results_csv(out, result.rows)
    if args.plot_data or args.figures:
        from . import plotting

        if args.plot_data:
            plotting.write_series_files(result.rows, out.parent)
        if args.figures:
            plotting.render_figures(result.rows, out.parent)
    for failure in result.failures:
        print(
            f"warning: size {failure.size} {failure.solver} realization "
            f"{failure.realization} failed: {failure.reason}",
            file=sys.stderr,
        )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="kermit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic instance")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--size", type=int, default=20, help="grid rows N")
    gen.add_argument("--cols", type=int, default=None, help="grid cols L (default N)")
    gen.add_argument("--p", type=int, default=5, help="factor columns")
    gen.add_argument("--snr", type=_parse_snr, default=math.inf)
    gen.add_argument("--m", type=int, default=60, help="training entries")
    gen.add_argument("--u", type=int, default=None, help="testing entries (default rest)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--profile", default="harmonic", help="kernel weight profile")
    gen.add_argument(
        "--raw-weights",
        action="store_true",
        help="skip row-power normalization of the kernel",
    )
    gen.set_defaults(func=cmd_gen)

    complete = sub.add_parser("complete", help="fit a solver and write the estimate")
    complete.add_argument("--solver", required=True, choices=SOLVERS)
    complete.add_argument("--matrix", required=True, help="observed matrix file")
    complete.add_argument("--split", required=True, help="split file")
    complete.add_argument("--out", required=True, help="estimate output file")
    complete.add_argument("--model-out", default=None, help="optional model dump")
    complete.add_argument("--kernel-w", default=None, help="row kernel file")
    complete.add_argument("--kernel-h", default=None, help="column kernel file")
    complete.add_argument("--kernel-f", default=None, help="grid kernel file")
    complete.add_argument("--p", type=int, default=10)
    complete.add_argument("--mu", type=float, default=1e-6)
    complete.add_argument("--max-iters", type=int, default=500)
    complete.add_argument("--tol", type=float, default=1e-8)
    complete.add_argument("--als-seed", type=int, default=0)
    complete.set_defaults(func=cmd_complete)

    trc = sub.add_parser("trc", help="estimate complexity and its bound")
    trc.add_argument(
        "--class",
        dest="klass",
        required=True,
        choices=("base_mc", "kernel_mc", "inductive", "kkmcex"),
    )
    trc.add_argument("--split", required=True, help="split file")
    trc.add_argument("--t", type=float, default=None, help="nuclear-norm radius")
    trc.add_argument("--t-b", type=float, default=None, help="kernel trace radius")
    trc.add_argument("--t-w", type=float, default=None, help="row coefficient radius")
    trc.add_argument("--t-h", type=float, default=None, help="col coefficient radius")
    trc.add_argument("--b", type=float, default=None, help="ridge ellipsoid radius")
    trc.add_argument("--kernel-w", default=None)
    trc.add_argument("--kernel-h", default=None)
    trc.add_argument("--kernel-f", default=None)
    trc.add_argument("--draws", type=int, default=200)
    trc.add_argument("--seed", type=int, default=0)
    trc.add_argument(
        "--exhaustive",
        action="store_true",
        help="average over all 2^n sign vectors instead of sampling",
    )
    trc.add_argument(
        "--g",
        type=float,
        default=1.0,
        help="universal-constant stand-in for the nuclear-norm bounds",
    )
    trc.set_defaults(func=cmd_trc)

    experiment = sub.add_parser("experiment", help="run the loss-vs-size sweep")
    experiment.add_argument("--config", default=None, help="JSON config file")
    experiment.add_argument("--out", default="results.csv", help="results CSV path")
    experiment.add_argument("--sizes", default=None, help="comma-separated sizes")
    experiment.add_argument("--m", type=int, default=None)
    experiment.add_argument("--u", type=int, default=None)
    experiment.add_argument("--p", type=int, default=None)
    experiment.add_argument("--snr", type=_parse_snr, default=None)
    experiment.add_argument("--realizations", type=int, default=None)
    experiment.add_argument("--cv-folds", type=int, default=None)
    experiment.add_argument("--seed", type=int, default=None)
    experiment.add_argument("--solvers", default=None, help="comma-separated subset")
    experiment.add_argument("--profile", default=None, help="kernel weight profile")
    experiment.add_argument(
        "--plot-data",
        action="store_true",
        help="write per-solver x/y series files next to the CSV",
    )
    experiment.add_argument(
        "--figures",
        action="store_true",
        help="render loss-vs-size figures next to the CSV",
    )
    experiment.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kermit: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"kermit: data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"kermit: numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"kermit: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
