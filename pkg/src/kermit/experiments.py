"""Synthetic experiment pipeline: data generation, regularization
selection, and the loss-versus-size realization loops.

The desk-scale defaults (sizes 100..800, m=300, p=10, 50 realizations)
are scaled down from much larger published runs so a full sweep stays
under a few minutes; the protocol is otherwise the same: one
cross-validated regularization weight picked at the smallest size, scaled
with the kernel mean diagonal for the kernel solvers, and a fresh matrix
and sampling set per realization.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, KermitError
from .kernels import (
    DftKernelSpec,
    KernelMatrix,
    KroneckerKernel,
    WEIGHT_PROFILES,
    kf_dim,
    kf_trace,
)
from .sampling import ObservationVector, SampleSplit, uniform_split
from .solvers import AlsConfig, kkmcex_fit, kkmcex_predict, kmc_als_fit, mc_als_fit
from .complexity import generalization_error

SOLVERS = ("mc", "kmc", "kkmcex")

_CV_STREAM_TAG = 2_000_003


@dataclass
class SyntheticInstance:
    """Ground truth F, noise E, and the observed M = F + E."""

    F: np.ndarray
    E: np.ndarray
    M: np.ndarray
    p: int
    snr: float


def _resolve_kernels(n_rows: int, kernel_spec):
    if isinstance(kernel_spec, DftKernelSpec):
        from .kernels import build_dft_kernel

        k = build_dft_kernel(kernel_spec)
        kernels = (k, k)
    elif isinstance(kernel_spec, KernelMatrix):
        kernels = (kernel_spec, kernel_spec)
    else:
        kernels = tuple(kernel_spec)
        if len(kernels) != 2:
            raise DataError("kernel_spec must be a spec, a kernel, or a (kw, kh) pair")
    kw, kh = kernels
    if kw.dim != n_rows:
        raise DataError(f"row kernel dim {kw.dim} does not match N={n_rows}")
    return kw, kh


def generate_synthetic(
    n_rows: int, p: int, snr: float, kernel_spec, seed
) -> SyntheticInstance:
    """Draw F = Kw B C^T Kh with standard Gaussian coefficients.

    The noise matrix is rescaled so the power ratio ||F||_F^2 / ||E||_F^2
    equals snr exactly; snr = inf gives a noiseless instance.
    """
    if p < 1:
        raise DataError("p must be at least 1")
    if not (snr > 0):
        raise DataError("snr must be positive (or inf)")
    kw, kh = _resolve_kernels(n_rows, kernel_spec)
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((kw.dim, p))
    c = rng.standard_normal((kh.dim, p))
    f = kw.entries @ b @ c.T @ kh.entries
    if math.isinf(snr):
        e = np.zeros_like(f)
    else:
        e = rng.standard_normal(f.shape)
        f_norm = np.linalg.norm(f)
        e_norm = np.linalg.norm(e)
        if f_norm == 0.0 or e_norm == 0.0:
            e = np.zeros_like(f)
        else:
            e *= f_norm / (np.sqrt(snr) * e_norm)
    return SyntheticInstance(F=f, E=e, M=f + e, p=p, snr=float(snr))


def _solver_kernels(solver: str, kernels):
    """Normalize the kernel argument per solver kind."""
    if solver == "mc":
        return None
    if kernels is None:
        raise DataError(f"solver {solver!r} needs kernels")
    if isinstance(kernels, (KernelMatrix, KroneckerKernel)) and solver == "kkmcex":
        return kernels
    kw, kh = kernels
    if solver == "kkmcex":
        return KroneckerKernel(kh=kh, kw=kw)
    return kw, kh


def fit_solver(
    solver: str,
    obs: ObservationVector,
    split: SampleSplit,
    kernels,
    mu: float,
    p: int,
    als_cfg: Optional[AlsConfig] = None,
) -> np.ndarray:
    """Run one solver and return the full-grid estimate."""
    if solver == "mc":
        return mc_als_fit(obs, split, p, mu, als_cfg).F_hat
    if solver == "kmc":
        kw, kh = _solver_kernels(solver, kernels)
        return kmc_als_fit(obs, split, kw, kh, p, mu, als_cfg).F_hat
    if solver == "kkmcex":
        kf = _solver_kernels(solver, kernels)
        return kkmcex_predict(kkmcex_fit(obs, split, kf, mu)).F_hat
    raise DataError(f"unknown solver {solver!r}")


def cross_validate_mu(
    obs: ObservationVector,
    split: SampleSplit,
    solver: str,
    kernels,
    mu_grid: Sequence[float],
    folds: int = 5,
    seed=0,
    p: int = 10,
    als_cfg: Optional[AlsConfig] = None,
) -> float:
    """Pick the grid weight minimizing mean held-out square loss.

    The training set is partitioned into ``folds`` disjoint validation
    chunks; ties break toward the larger weight.
    """
    grid = sorted(float(g) for g in mu_grid)
    if not grid:
        raise DataError("mu grid must be nonempty")
    if folds < 2:
        raise DataError("need at least 2 folds")
    if split.m < 2 * folds:
        raise DataError(f"training set too small for {folds}-fold validation")
    rng = np.random.default_rng(seed)
    order = rng.permutation(split.m)
    chunks = np.array_split(order, folds)
    sub = []
    for chunk in chunks:
        mask = np.zeros(split.m, dtype=bool)
        mask[chunk] = True
        sub_split = SampleSplit(
            split.n_rows, split.n_cols, split.train[~mask], split.train[mask]
        )
        sub_obs = ObservationVector(sub_split, obs.values[~mask])
        sub.append((sub_split, sub_obs, obs.values[mask]))
    best_mu, best_loss = grid[0], np.inf
    for mu in grid:
        losses = []
        for sub_split, sub_obs, held_out in sub:
            f_hat = fit_solver(solver, sub_obs, sub_split, kernels, mu, p, als_cfg)
            resid = held_out - f_hat[sub_split.test[:, 0], sub_split.test[:, 1]]
            losses.append(float(resid @ resid) / len(held_out))
        mean_loss = float(np.mean(losses))
        if mean_loss <= best_loss:
            best_mu, best_loss = mu, mean_loss
    return best_mu


def scale_mu(mu_ref: float, kf_ref, kf_new) -> float:
    """Rescale a reference weight by the kernel mean-diagonal ratio."""
    ref = kf_trace(kf_ref) / kf_dim(kf_ref)
    new = kf_trace(kf_new) / kf_dim(kf_new)
    if ref <= 0 or new <= 0:
        raise DataError("mu scaling needs kernels with positive trace")
    return mu_ref * new / ref


def build_experiment_kernel(
    n: int, profile: str = "harmonic", normalize_row_power: bool = True
) -> KernelMatrix:
    """The shared row/column kernel used by the synthetic protocol.

    Row-power normalization rescales the kernel so the mean squared row
    norm is 1, which keeps the per-entry signal power comparable across
    sizes (published runs leave the weight profile unspecified).
    """
    try:
        weights = WEIGHT_PROFILES[profile](n)
    except KeyError:
        raise DataError(
            f"unknown weight profile {profile!r}; options: {sorted(WEIGHT_PROFILES)}"
        ) from None
    from .kernels import build_dft_kernel

    kernel = build_dft_kernel(DftKernelSpec(n, weights))
    if normalize_row_power:
        mean_row_power = np.linalg.norm(kernel.entries) ** 2 / n
        kernel = kernel.scaled(1.0 / np.sqrt(mean_row_power))
    return kernel


@dataclass
class ExperimentConfig:
    """Protocol constants for the loss-versus-size sweep."""

    sizes: Sequence[int] = (100, 200, 400, 800)
    m: int = 300
    u: Optional[int] = None  # None: all remaining entries
    p: int = 10
    snr: float = math.inf
    realizations: int = 50
    mu_grid: Sequence[float] = tuple(float(g) for g in np.logspace(-8, 2, 11))
    cv_folds: int = 5
    seed: int = 0
    solvers: Sequence[str] = SOLVERS
    weight_profile: str = "harmonic"
    normalize_row_power: bool = True
    als_max_iters: int = 200
    als_tol: float = 1e-7

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self.solvers = tuple(self.solvers)
        self.mu_grid = tuple(float(g) for g in self.mu_grid)
        if not self.sizes or any(s < 2 for s in self.sizes):
            raise DataError("sizes must all be at least 2")
        if self.realizations < 1:
            raise DataError("realizations must be at least 1")
        if self.m < 1:
            raise DataError("m must be at least 1")
        if self.p < 1:
            raise DataError("p must be at least 1")
        if not self.solvers or any(s not in SOLVERS for s in self.solvers):
            raise DataError(f"solvers must be a nonempty subset of {SOLVERS}")
        if not (self.snr > 0):
            raise DataError("snr must be positive (or inf)")
        if self.weight_profile not in WEIGHT_PROFILES:
            raise DataError(f"unknown weight profile {self.weight_profile!r}")
        for n in self.sizes:
            u = self.u if self.u is not None else n * n - self.m
            if u < 1 or self.m + u > n * n:
                raise DataError(
                    f"size {n}: cannot place m={self.m}, u={u} on an {n}x{n} grid"
                )

    def u_for(self, n: int) -> int:
        return self.u if self.u is not None else n * n - self.m

    def als_config(self) -> AlsConfig:
        return AlsConfig(max_iters=self.als_max_iters, tol=self.als_tol)


@dataclass
class ExperimentRow:
    """Aggregate losses for one (solver, size) cell."""

    solver: str
    n_rows: int
    n_cols: int
    m: int
    u: int
    p: int
    snr: float
    mu: float
    realizations: int
    train_mean: float
    train_std: float
    test_mean: float
    test_std: float
    ge_mean: float
    ge_std: float


@dataclass
class CellFailure:
    size: int
    solver: str
    realization: int
    reason: str


@dataclass
class ExperimentResult:
    rows: list
    failures: list
    selected_mu: dict = field(default_factory=dict)


def _realization_losses(
    cfg: ExperimentConfig, size_idx: int, n: int, kernel, mus: dict, r: int
):
    """Losses for every solver on one fresh instance; failures recorded."""
    streams = np.random.SeedSequence((cfg.seed, size_idx, r)).spawn(3)
    instance = generate_synthetic(n, cfg.p, cfg.snr, (kernel, kernel), streams[0])
    split = uniform_split(n, n, cfg.m, cfg.u_for(n), streams[1])
    obs = ObservationVector.from_matrix(instance.M, split)
    als_cfg = AlsConfig(
        max_iters=cfg.als_max_iters,
        tol=cfg.als_tol,
        seed=int(streams[2].generate_state(1)[0]),
    )
    losses, failures = {}, []
    for solver, mu in mus.items():
        try:
            f_hat = fit_solver(
                solver, obs, split, (kernel, kernel), mu, cfg.p, als_cfg
            )
            losses[solver] = generalization_error(instance.M, f_hat, split)
        except (KermitError, np.linalg.LinAlgError) as exc:
            failures.append(CellFailure(n, solver, r, str(exc)))
    return losses, failures


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Full sweep: per size and solver, realization means and stds.

    Deterministic given the config seed: each realization draws from a
    substream keyed by (seed, size index, realization index), so cells are
    independent of evaluation order and thread count.
    """
    kernels = {
        n: build_experiment_kernel(n, cfg.weight_profile, cfg.normalize_row_power)
        for n in sorted(set(cfg.sizes))
    }

    # One cross-validated weight per solver, picked at the smallest size.
    n0 = cfg.sizes[0]
    cv_streams = np.random.SeedSequence((cfg.seed, _CV_STREAM_TAG)).spawn(
        2 + len(cfg.solvers)
    )
    cv_instance = generate_synthetic(
        n0, cfg.p, cfg.snr, (kernels[n0], kernels[n0]), cv_streams[0]
    )
    cv_split = uniform_split(n0, n0, cfg.m, cfg.u_for(n0), cv_streams[1])
    cv_obs = ObservationVector.from_matrix(cv_instance.M, cv_split)
    ref_kron = KroneckerKernel(kh=kernels[n0], kw=kernels[n0])
    base_mu = {}
    for k, solver in enumerate(cfg.solvers):
        base_mu[solver] = cross_validate_mu(
            cv_obs,
            cv_split,
            solver,
            (kernels[n0], kernels[n0]),
            cfg.mu_grid,
            folds=cfg.cv_folds,
            seed=cv_streams[2 + k],
            p=cfg.p,
            als_cfg=cfg.als_config(),
        )

    rows, failures = [], []
    selected_mu = {}
    for size_idx, n in enumerate(cfg.sizes):
        kernel = kernels[n]
        kron = KroneckerKernel(kh=kernel, kw=kernel)
        mus = {}
        for solver in cfg.solvers:
            if solver == "mc":
                mus[solver] = base_mu[solver]
            else:
                mus[solver] = scale_mu(base_mu[solver], ref_kron, kron)
        selected_mu[n] = dict(mus)

        def work(r, size_idx=size_idx, n=n, kernel=kernel, mus=mus):
            return _realization_losses(cfg, size_idx, n, kernel, mus, r)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(work, range(cfg.realizations)))
        else:
            outcomes = [work(r) for r in range(cfg.realizations)]

        for solver in cfg.solvers:
            triplets = np.array(
                [out[0][solver] for out in outcomes if solver in out[0]]
            )
            for out in outcomes:
                failures.extend(f for f in out[1] if f.solver == solver)
            count = len(triplets)
            if count == 0:
                stats = [math.nan] * 6
            else:
                means = triplets.mean(axis=0)
                stds = (
                    triplets.std(axis=0, ddof=1) if count > 1 else np.zeros(3)
                )
                stats = [
                    means[0], stds[0], means[1], stds[1], means[2], stds[2],
                ]
            rows.append(
                ExperimentRow(
                    solver=solver,
                    n_rows=n,
                    n_cols=n,
                    m=cfg.m,
                    u=cfg.u_for(n),
                    p=cfg.p,
                    snr=cfg.snr,
                    mu=mus[solver],
                    realizations=count,
                    train_mean=float(stats[0]),
                    train_std=float(stats[1]),
                    test_mean=float(stats[2]),
                    test_std=float(stats[3]),
                    ge_mean=float(stats[4]),
                    ge_std=float(stats[5]),
                )
            )
    return ExperimentResult(rows=rows, failures=failures, selected_mu=selected_mu)
