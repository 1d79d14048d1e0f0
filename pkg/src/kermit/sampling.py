"""Observation index sets and the maps between matrix and vector views.

Vectorization is column-major throughout: grid entry (i, j) sits at vector
position j * n_rows + i.  This keeps the grid kernel kh (x) kw aligned with
vec(F): the vector runs over (0,0), (1,0), ..., (N-1,0), (0,1), ...

"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _as_pairs(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DataError(f"expected an array of (i, j) pairs, got shape {arr.shape}")
    return arr


def _check_bounds(pairs: np.ndarray, n_rows: int, n_cols: int):
    if pairs.size == 0:
        return
    i, j = pairs[:, 0], pairs[:, 1]
    if i.min() < 0 or j.min() < 0 or i.max() >= n_rows or j.max() >= n_cols:
        raise DataError(
            f"index out of bounds for a {n_rows}x{n_cols} grid: "
            f"rows [{i.min()}, {i.max()}], cols [{j.min()}, {j.max()}]"
        )


@dataclass
class SampleSplit:
    """Disjoint ordered train/test index sets over an n_rows x n_cols grid."""

    n_rows: int
    n_cols: int
    train: np.ndarray
    test: np.ndarray
    q: float = field(init=False)

    def __post_init__(self):
        self.train = _as_pairs(self.train)
        self.test = _as_pairs(self.test)
        if self.n_rows < 1 or self.n_cols < 1:
            raise DataError("grid dimensions must be positive")
        if len(self.train) < 1:
            raise DataError("training set must be nonempty")
        _check_bounds(self.train, self.n_rows, self.n_cols)
        _check_bounds(self.test, self.n_rows, self.n_cols)
        flat = np.concatenate([self.train_vec, self.test_vec])
        if len(np.unique(flat)) != len(flat):
            raise DataError("train/test pairs must be disjoint and free of repeats")
        # u = 0 (fit-only splits) gives q = inf; loss/complexity code requires u >= 1
        self.q = 1.0 / self.m + (1.0 / self.u if self.u else np.inf)

    @property
    def m(self) -> int:
        return len(self.train)

    @property
    def u(self) -> int:
        return len(self.test)

    @property
    def n(self) -> int:
        return self.m + self.u

    @property
    def train_vec(self) -> np.ndarray:
        """Column-major vector positions of the train pairs."""
        return self.train[:, 1] * self.n_rows + self.train[:, 0]

    @property
    def test_vec(self) -> np.ndarray:
        return self.test[:, 1] * self.n_rows + self.test[:, 0]

    @property
    def all_pairs(self) -> np.ndarray:
        """Train pairs followed by test pairs (the S_n ordering)."""
        return np.concatenate([self.train, self.test], axis=0)


def uniform_split(n_rows: int, n_cols: int, m: int, u: int, seed) -> SampleSplit:
    """m + u distinct pairs drawn uniformly without replacement.

    The first m draws form the training set, the next u the testing set.
    Deterministic given the seed.
    """
    if m < 1 or u < 1:
        raise DataError("m and u must both be at least 1")
    if m + u > n_rows * n_cols:
        raise DataError(
            f"cannot draw {m + u} distinct entries from a "
            f"{n_rows}x{n_cols} grid"
        )
    rng = np.random.default_rng(seed)
    flat = rng.choice(n_rows * n_cols, size=m + u, replace=False)
    pairs = np.stack([flat % n_rows, flat // n_rows], axis=1)
    return SampleSplit(n_rows, n_cols, pairs[:m], pairs[m:])


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return np.asarray(matrix).ravel(order="F")


def unvec(v: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    v = np.asarray(v)
    if v.size != n_rows * n_cols:
        raise DataError(f"cannot reshape {v.size} values to {n_rows}x{n_cols}")
    return v.reshape((n_rows, n_cols), order="F")


def apply_mask(matrix: np.ndarray, pairs) -> np.ndarray:
    """Zero out all entries except those indexed by pairs."""
    matrix = np.asarray(matrix)
    pairs = _as_pairs(pairs)
    _check_bounds(pairs, *matrix.shape)
    out = np.zeros_like(matrix)
    if len(pairs):
        out[pairs[:, 0], pairs[:, 1]] = matrix[pairs[:, 0], pairs[:, 1]]
    return out


def gather(matrix: np.ndarray, pairs) -> np.ndarray:
    """Read entries in pair order into a vector."""
    matrix = np.asarray(matrix)
    pairs = _as_pairs(pairs)
    _check_bounds(pairs, *matrix.shape)
    return matrix[pairs[:, 0], pairs[:, 1]]


def scatter(values: np.ndarray, pairs, n_rows: int, n_cols: int) -> np.ndarray:
    """Place values[k] at pairs[k] on an otherwise zero grid."""
    values = np.asarray(values, dtype=float)
    pairs = _as_pairs(pairs)
    if len(values) != len(pairs):
        raise DataError(f"{len(values)} values for {len(pairs)} index pairs")
    _check_bounds(pairs, n_rows, n_cols)
    out = np.zeros((n_rows, n_cols))
    out[pairs[:, 0], pairs[:, 1]] = values
    return out


@dataclass
class ObservationVector:
    """Observed values aligned with the training ordering of a split."""

    split: SampleSplit
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.split.m,):
            raise DataError(
                f"expected {self.split.m} observed values, got "
                f"shape {self.values.shape}"
            )

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, split: SampleSplit) -> "ObservationVector":
        return cls(split, gather(matrix, split.train))
