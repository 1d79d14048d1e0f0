"""Completion solvers: factored ALS, kernel-regularized ALS, and the
closed-form Kronecker-kernel ridge estimator.

The two ALS solvers alternate exact half-steps, so objective traces are
non-increasing by construction.  The kernel ALS half-step is solved through
its m x m dual system (one Cholesky per half-step): this avoids forming any
kernel inverse, keeps iterates on the kernel's numerical range, and is
exact, which the monotonicity guarantees rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import DataError, NumericalError
from .kernels import KernelMatrix, KroneckerKernel, kf_block, kf_dim, vec_positions
from .sampling import ObservationVector, SampleSplit, unvec

RESIDUAL_RTOL = 1e-10
PINV_RTOL = 1e-12


@dataclass
class AlsConfig:
    """Iteration controls shared by both ALS solvers.

    Factors start from i.i.d. Gaussian entries with variance 1/sqrt(p)
    drawn from ``seed`` unless an explicit (W0, H0) pair is given.
    """

    max_iters: int = 500
    tol: float = 1e-8
    seed: int = 0
    init: Optional[tuple] = None


@dataclass
class FactorModel:
    """Bilinear factors W (N x p) and H (L x p); the estimate is W H^T.

    For kernel ALS the coefficient matrices satisfy W = K_w B and
    H = K_h C exactly by construction.
    """

    W: np.ndarray
    H: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None


@dataclass
class KkmcexModel:
    """Ridge coefficients on the observed entries plus their context."""

    dbar: np.ndarray
    mu: float
    kernel: object  # KernelMatrix over the grid, or KroneckerKernel
    split: SampleSplit


@dataclass
class CompletionEstimate:
    """A full recovered matrix plus the model that produced it."""

    F_hat: np.ndarray
    model: object
    objective_trace: Optional[np.ndarray] = None


def _check_obs(obs: ObservationVector, split: SampleSplit):
    if obs.split is split:
        return
    if (
        obs.split.n_rows != split.n_rows
        or obs.split.n_cols != split.n_cols
        or not np.array_equal(obs.split.train, split.train)
    ):
        raise DataError("observation vector does not match the given split")


def _init_factors(n_rows, n_cols, p, cfg: AlsConfig):
    if cfg.init is not None:
        w0, h0 = cfg.init
        w0 = np.array(w0, dtype=float)
        h0 = np.array(h0, dtype=float)
        if w0.shape != (n_rows, p) or h0.shape != (n_cols, p):
            raise DataError("init factors have wrong shapes")
        return w0, h0
    rng = np.random.default_rng(cfg.seed)
    std = p ** -0.25
    return (
        std * rng.standard_normal((n_rows, p)),
        std * rng.standard_normal((n_cols, p)),
    )


def _fitted_at(W, H, rows, cols):
    return np.einsum("kp,kp->k", W[rows], H[cols])


def _data_term(W, H, rows, cols, values):
    resid = values - _fitted_at(W, H, rows, cols)
    return float(resid @ resid)


def _ridge_rows(n_rows, other, row_idx, col_idx, values, mu, p):
    """Exact per-row ridge solves (G + mu I) w_i = b_i, batched by count.

    Rows without observations stay at zero, the minimizer of the
    regularizer alone.
    """
    W = np.zeros((n_rows, p))
    if len(values) == 0:
        return W
    order = np.argsort(row_idx, kind="stable")
    rows_s, cols_s, vals_s = row_idx[order], col_idx[order], values[order]
    uniq, starts, counts = np.unique(rows_s, return_index=True, return_counts=True)
    eye = mu * np.eye(p)
    for c in np.unique(counts):
        pick = counts == c
        idx = starts[pick][:, None] + np.arange(c)
        hs = other[cols_s[idx]]  # (R, c, p)
        y = vals_s[idx]  # (R, c)
        gram = np.einsum("rcp,rcq->rpq", hs, hs) + eye
        rhs = np.einsum("rcp,rc->rp", hs, y)
        try:
            sol = np.linalg.solve(gram, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            sol = np.stack(
                [np.linalg.lstsq(g, b, rcond=None)[0] for g, b in zip(gram, rhs)]
            )
        W[uniq[pick]] = sol
    return W


def _run_als(state_w, state_h, half_w, half_h, objective, cfg: AlsConfig):
    """Alternate exact half-steps, recording the objective after each."""
    trace = [objective(state_w, state_h)]
    prev = trace[0]
    tiny = np.finfo(float).tiny
    for _ in range(cfg.max_iters):
        state_w = half_w(state_h)
        trace.append(objective(state_w, state_h))
        state_h = half_h(state_w)
        trace.append(objective(state_w, state_h))
        cur = trace[-1]
        if abs(prev - cur) <= cfg.tol * max(abs(prev), tiny):
            break
        prev = cur
    return state_w, state_h, np.asarray(trace)


def mc_als_fit(
    obs: ObservationVector,
    split: SampleSplit,
    p: int,
    mu: float,
    als_cfg: Optional[AlsConfig] = None,
) -> CompletionEstimate:
    """Alternating ridge regression on the observed entries (base model).

    Minimizes ||P(M - W H^T)||_F^2 + mu (||W||_F^2 + ||H||_F^2) by exact
    row-wise least squares, alternating W given H and H given W.
    """
    cfg = als_cfg or AlsConfig()
    _check_obs(obs, split)
    if p < 1:
        raise DataError("factor rank p must be at least 1")
    if mu < 0:
        raise DataError("regularization must be nonnegative")
    if split.m == 0:
        raise DataError("empty training set")
    ti, tj = split.train[:, 0], split.train[:, 1]
    vals = obs.values
    W, H = _init_factors(split.n_rows, split.n_cols, p, cfg)

    def objective(w, h):
        return _data_term(w, h, ti, tj, vals) + mu * float(
            np.sum(w * w) + np.sum(h * h)
        )

    W, H, trace = _run_als(
        W,
        H,
        lambda h: _ridge_rows(split.n_rows, h, ti, tj, vals, mu, p),
        lambda w: _ridge_rows(split.n_cols, w, tj, ti, vals, mu, p),
        objective,
        cfg,
    )
    return CompletionEstimate(W @ H.T, FactorModel(W, H), trace)


def _dual_half_step(kernel: KernelMatrix, other, row_idx, col_idx, values, mu):
    """Exact kernel-regularized half-step via the m x m dual system.

    Solves (Gram + mu I) alpha = values with
    Gram[k, l] = K[i_k, i_l] * <other[j_k], other[j_l]>, then expands
    B[i_k] += alpha_k * other[j_k] and W = K B.  The result satisfies the
    half-step normal equations on the kernel range exactly.
    """
    f = other[col_idx]
    gram = kernel.entries[np.ix_(row_idx, row_idx)] * (f @ f.T)
    system = gram + mu * np.eye(len(values))
    try:
        alpha = cho_solve(cho_factor(system), values)
    except (LinAlgError, np.linalg.LinAlgError):
        w, v = np.linalg.eigh(system)
        keep = w > PINV_RTOL * max(w.max(), 0.0)
        alpha = v[:, keep] @ ((v[:, keep].T @ values) / w[keep])
    coeff = np.zeros((kernel.dim, other.shape[1]))
    np.add.at(coeff, row_idx, alpha[:, None] * f)
    return kernel.entries @ coeff, coeff


def kmc_als_fit(
    obs: ObservationVector,
    split: SampleSplit,
    kw: KernelMatrix,
    kh: KernelMatrix,
    p: int,
    mu: float,
    als_cfg: Optional[AlsConfig] = None,
) -> CompletionEstimate:
    """Kernel-regularized ALS with factors constrained to the kernel ranges.

    Minimizes ||P(M - W H^T)||_F^2 + mu (tr(W^T Kw+ W) + tr(H^T Kh+ H))
    with pseudo-inverse semantics on the kernels' numerical ranges.  Each
    half-step is solved exactly in closed form; see ``_dual_half_step``.
    With identity kernels the half-step systems coincide with the base
    solver's row-wise systems.
    """
    cfg = als_cfg or AlsConfig()
    _check_obs(obs, split)
    if p < 1:
        raise DataError("factor rank p must be at least 1")
    if mu < 0:
        raise DataError("regularization must be nonnegative")
    if kw.dim != split.n_rows or kh.dim != split.n_cols:
        raise DataError(
            f"kernel dims ({kw.dim}, {kh.dim}) do not match the "
            f"{split.n_rows}x{split.n_cols} grid"
        )
    ti, tj = split.train[:, 0], split.train[:, 1]
    vals = obs.values
    W, H = _init_factors(split.n_rows, split.n_cols, p, cfg)
    coeffs = {"B": None, "C": None}

    def reg(factor, coeff, kernel):
        # tr(B^T K B) = sum(B * W) once W = K B; pseudo-inverse form otherwise
        if coeff is not None:
            return float(np.sum(coeff * (kernel.entries @ coeff)))
        return float(np.sum(factor * kernel.pinv_dot(factor)))

    def objective(w, h):
        return _data_term(w, h, ti, tj, vals) + mu * (
            reg(w, coeffs["B"], kw) + reg(h, coeffs["C"], kh)
        )

    def half_w(h):
        w, coeffs["B"] = _dual_half_step(kw, h, ti, tj, vals, mu)
        return w

    def half_h(w):
        h, coeffs["C"] = _dual_half_step(kh, w, tj, ti, vals, mu)
        return h

    W, H, trace = _run_als(W, H, half_w, half_h, objective, cfg)
    return CompletionEstimate(
        W @ H.T, FactorModel(W, H, coeffs["B"], coeffs["C"]), trace
    )


def kkmcex_fit(
    obs: ObservationVector, split: SampleSplit, kf, mu: float
) -> KkmcexModel:
    """Closed-form kernel ridge fit on the sampled grid kernel.

    Solves the m x m symmetric positive-definite system
    (Kbar + mu I) dbar = mbar by Cholesky, where Kbar is the train/train
    sub-block of the grid kernel.  Falls back to an eigenvalue solve if
    the factorization fails.
    """
    _check_obs(obs, split)
    if mu <= 0:
        raise DataError("regularization must be positive: the sampled kernel may be singular")
    if split.m == 0:
        raise DataError("empty training set")
    if kf_dim(kf) != split.n_rows * split.n_cols:
        raise DataError(
            f"grid kernel dim {kf_dim(kf)} does not match the "
            f"{split.n_rows}x{split.n_cols} grid"
        )
    ti, tj = split.train[:, 0], split.train[:, 1]
    kbar = kf_block(kf, ti, tj, ti, tj, split.n_rows)
    system = kbar + mu * np.eye(split.m)
    vals = obs.values
    try:
        dbar = cho_solve(cho_factor(system), vals)
    except (LinAlgError, np.linalg.LinAlgError):
        w, v = np.linalg.eigh(system)
        keep = w > PINV_RTOL * max(w.max(), 0.0)
        dbar = v[:, keep] @ ((v[:, keep].T @ vals) / w[keep])
    resid = np.linalg.norm(system @ dbar - vals)
    denom = np.linalg.norm(system) * np.linalg.norm(dbar) + np.linalg.norm(vals)
    if denom > 0 and resid / denom > RESIDUAL_RTOL:
        raise NumericalError(
            f"ridge system solve too inaccurate: backward error {resid / denom:.3e}"
        )
    return KkmcexModel(dbar=dbar, mu=float(mu), kernel=kf, split=split)


def kkmcex_predict(model: KkmcexModel) -> CompletionEstimate:
    """Extrapolate the ridge fit to every grid entry.

    The full estimate is unvec(Kf S^T dbar); with a Kronecker kernel the
    product reduces to Kw[:, rows] diag(dbar) Kh[:, cols]^T.
    """
    split = model.split
    ti, tj = split.train[:, 0], split.train[:, 1]
    if isinstance(model.kernel, KroneckerKernel):
        f_hat = (model.kernel.kw.entries[:, ti] * model.dbar) @ model.kernel.kh.entries[
            :, tj
        ].T
    else:
        fvec = model.kernel.entries[:, vec_positions(ti, tj, split.n_rows)] @ model.dbar
        f_hat = unvec(fvec, split.n_rows, split.n_cols)
    return CompletionEstimate(f_hat, model, None)


def objective_eval(kind, state, obs, split, kernels=None, mu=0.0) -> float:
    """Exact objective value for a solver state.

    kind "mc": state (W, H) or FactorModel.
    kind "kmc": kernels = (kw, kh); regularizer uses the pseudo-inverse form.
    kind "kkmcex": kernels = grid kernel; state is dbar or a KkmcexModel.
    """
    _check_obs(obs, split)
    ti, tj = split.train[:, 0], split.train[:, 1]
    vals = obs.values
    if kind == "mc":
        w, h = (state.W, state.H) if isinstance(state, FactorModel) else state
        return _data_term(w, h, ti, tj, vals) + mu * float(
            np.sum(w * w) + np.sum(h * h)
        )
    if kind == "kmc":
        if kernels is None:
            raise DataError("kmc objective needs (kw, kh)")
        kw, kh = kernels
        w, h = (state.W, state.H) if isinstance(state, FactorModel) else state
        if w.shape[0] != kw.dim or h.shape[0] != kh.dim:
            raise DataError("state does not match kernel dimensions")
        reg = float(np.sum(w * kw.pinv_dot(w)) + np.sum(h * kh.pinv_dot(h)))
        return _data_term(w, h, ti, tj, vals) + mu * reg
    if kind == "kkmcex":
        if isinstance(state, KkmcexModel):
            kf = state.kernel
            dbar = state.dbar
        else:
            kf = kernels
            dbar = np.asarray(state, dtype=float)
        if kf is None:
            raise DataError("kkmcex objective needs the grid kernel")
        if dbar.shape != (split.m,):
            raise DataError(f"dbar must have length {split.m}")
        kbar = kf_block(kf, ti, tj, ti, tj, split.n_rows)
        resid = vals - kbar @ dbar
        return float(resid @ resid + mu * (dbar @ (kbar @ dbar)))
    raise DataError(f"unknown objective kind {kind!r}")
