"""File formats: matrices, observations, splits, models, and result CSVs.

Matrix files carry a `rows cols` header line followed by row-major ASCII
doubles.  Floats are written with %.17g so files round-trip bit-exactly.
Observations are `i,j,value` CSV lines with 0-based indices.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .sampling import SampleSplit
from .solvers import CompletionEstimate, FactorModel, KkmcexModel

RESULT_FIELDS = (
    "solver,N,L,m,u,p,snr,mu,realizations,"
    "train_mean,train_std,test_mean,test_std,ge_mean,ge_std"
)

TRC_FIELDS = "class,kind_params,N,L,m,u,draws,estimate,std_error,bound"


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def write_matrix(path, matrix: np.ndarray):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    with open(path, "w") as handle:
        handle.write(f"{rows} {cols}\n")
        for row in matrix:
            handle.write(" ".join(_fmt(v) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    try:
        with open(path) as handle:
            header = handle.readline().split()
            if len(header) != 2:
                raise DataError(f"{path}: expected 'rows cols' header")
            rows, cols = int(header[0]), int(header[1])
            values = np.array(handle.read().split(), dtype=float)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: malformed matrix file ({exc})") from exc
    if values.size != rows * cols:
        raise DataError(
            f"{path}: header says {rows}x{cols} but found {values.size} values"
        )
    return values.reshape(rows, cols)


def write_observations(path, pairs, values):
    pairs = np.asarray(pairs)
    values = np.asarray(values, dtype=float)
    if len(pairs) != len(values):
        raise DataError("pairs and values must have the same length")
    with open(path, "w") as handle:
        for (i, j), v in zip(pairs, values):
            handle.write(f"{int(i)},{int(j)},{_fmt(v)}\n")


def read_observations(path):
    pairs, values = [], []
    try:
        with open(path) as handle:
            for line_no, line in enumerate(handle, 1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise DataError(f"{path}:{line_no}: expected 'i,j,value'")
                pairs.append((int(parts[0]), int(parts[1])))
                values.append(float(parts[2]))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: malformed observation file ({exc})") from exc
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2), np.asarray(values)


def write_split(path, split: SampleSplit):
    """Single split file: the grid shape, then two CSV index lists."""
    with open(path, "w") as handle:
        handle.write(f"# grid,{split.n_rows},{split.n_cols}\n")
        handle.write(f"# train,{split.m}\n")
        for i, j in split.train:
            handle.write(f"{i},{j}\n")
        handle.write(f"# test,{split.u}\n")
        for i, j in split.test:
            handle.write(f"{i},{j}\n")


def read_split(path) -> SampleSplit:
    n_rows = n_cols = None
    sections = {"train": [], "test": []}
    current = None
    try:
        with open(path) as handle:
            for line_no, line in enumerate(handle, 1):
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = [p.strip() for p in line.lstrip("#").split(",")]
                    if parts[0] == "grid" and len(parts) == 3:
                        n_rows, n_cols = int(parts[1]), int(parts[2])
                    elif parts[0] in sections:
                        current = parts[0]
                    else:
                        raise DataError(f"{path}:{line_no}: unknown section {parts[0]!r}")
                    continue
                if current is None:
                    raise DataError(f"{path}:{line_no}: index pair before a section header")
                i, j = line.split(",")
                sections[current].append((int(i), int(j)))
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: malformed split file ({exc})") from exc
    if n_rows is None:
        raise DataError(f"{path}: missing '# grid,N,L' header")
    return SampleSplit(n_rows, n_cols, sections["train"], sections["test"])


def write_model(path, estimate: CompletionEstimate, extra: dict | None = None):
    """Model coefficients with a small structured text header."""
    model = estimate.model
    if not isinstance(model, (KkmcexModel, FactorModel)):
        raise DataError(f"cannot serialize model of type {type(model).__name__}")
    meta = dict(extra or {})
    with open(path, "w") as handle:
        if isinstance(model, KkmcexModel):
            handle.write("# model kkmcex\n")
            handle.write(f"# mu {_fmt(model.mu)}\n")
            for key, value in sorted(meta.items()):
                handle.write(f"# {key} {value}\n")
            handle.write(f"dbar {len(model.dbar)}\n")
            handle.write(" ".join(_fmt(v) for v in model.dbar) + "\n")
            return
        handle.write("# model factors\n")
        if estimate.objective_trace is not None:
            # trace holds the value before iterating plus two per sweep
            handle.write(f"# iterations {(len(estimate.objective_trace) - 1) // 2}\n")
        for key, value in sorted(meta.items()):
            handle.write(f"# {key} {value}\n")
        for name, factor in (("W", model.W), ("H", model.H)):
            handle.write(f"{name} {factor.shape[0]} {factor.shape[1]}\n")
            for row in factor:
                handle.write(" ".join(_fmt(v) for v in row) + "\n")


def format_float(x: float) -> str:
    """Shortest round-trip decimal form, used in CSV output."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_results_csv(path, rows):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULT_FIELDS.split(","))
        for row in rows:
            writer.writerow(
                [
                    row.solver,
                    row.n_rows,
                    row.n_cols,
                    row.m,
                    row.u,
                    row.p,
                    format_float(row.snr),
                    format_float(row.mu),
                    row.realizations,
                    format_float(row.train_mean),
                    format_float(row.train_std),
                    format_float(row.test_mean),
                    format_float(row.test_std),
                    format_float(row.ge_mean),
                    format_float(row.ge_std),
                ]
            )


def read_results_csv(path):
    """Rows back as dicts with numeric fields parsed."""
    from .experiments import ExperimentRow

    rows = []
    try:
        with open(path, newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames != RESULT_FIELDS.split(","):
                raise DataError(f"{path}: unexpected results header")
            for record in reader:
                rows.append(
                    ExperimentRow(
                        solver=record["solver"],
                        n_rows=int(record["N"]),
                        n_cols=int(record["L"]),
                        m=int(record["m"]),
                        u=int(record["u"]),
                        p=int(record["p"]),
                        snr=float(record["snr"]),
                        mu=float(record["mu"]),
                        realizations=int(record["realizations"]),
                        train_mean=float(record["train_mean"]),
                        train_std=float(record["train_std"]),
                        test_mean=float(record["test_mean"]),
                        test_std=float(record["test_std"]),
                        ge_mean=float(record["ge_mean"]),
                        ge_std=float(record["ge_std"]),
                    )
                )
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: malformed results file ({exc})") from exc
    return rows


def format_trc_row(spec, split, result) -> str:
    """One CSV row: class, radii, grid, split sizes, and the estimate."""
    fields = [
        spec.kind,
        spec.params_label(),
        str(split.n_rows),
        str(split.n_cols),
        str(split.m),
        str(split.u),
        str(result.draws),
        format_float(result.estimate),
        format_float(result.std_error),
        format_float(result.bound if result.bound is not None else math.nan),
    ]
    return ",".join(fields)
