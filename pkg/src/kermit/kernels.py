"""Kernel matrix construction, composition, and factorization.

Kernels are held as dense symmetric PSD matrices with an eagerly computed
eigendecomposition, which downstream code uses for square roots, pseudo
inverses, and low-rank feature factorizations.  Row/column similarity
matrices combine into a grid kernel through the Kronecker product; for
large grids the product is kept implicit (:class:`KroneckerKernel`) so
only the sampled sub-blocks are ever materialized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import circulant

from .errors import DataError

SYMMETRY_RTOL = 1e-12
PSD_FLOOR_FACTOR = 1e-10
RECONSTRUCTION_RTOL = 1e-10
RANK_RTOL = 1e-10
PINV_RTOL = 1e-12
DEFAULT_MAX_KRON_DIM = 16384

# Reconstruction of V diag(w) V^T costs O(dim^3); skip the self-check for
# kernels too large to verify cheaply (analytic constructions stay exact).
_RECONSTRUCTION_CHECK_MAX_DIM = 2048


class KernelMatrix:
    """Symmetric PSD similarity matrix with cached eigendecomposition.

    Eigenvalues are stored in descending order with orthonormal
    eigenvectors in matching columns.  Instances are treated as immutable
    and are safe to share across threads.
    """

    def __init__(self, entries, eigen=None, clipped_mass=0.0):
        entries = np.array(entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise DataError(f"kernel must be square, got shape {entries.shape}")
        if entries.shape[0] == 0:
            raise DataError("kernel dimension must be positive")
        norm = np.linalg.norm(entries)
        asym = np.linalg.norm(entries - entries.T)
        if norm > 0 and asym > SYMMETRY_RTOL * norm:
            raise DataError(
                f"kernel entries not symmetric: rel asymmetry {asym / norm:.3e}"
            )
        if eigen is None:
            w, v = np.linalg.eigh(entries)
            order = np.argsort(w)[::-1]
            w, v = w[order], v[:, order]
        else:
            w, v = eigen
            w = np.asarray(w, dtype=float)
            v = np.asarray(v, dtype=float)
        floor = -PSD_FLOOR_FACTOR * max(np.trace(entries) / entries.shape[0], 0.0)
        if w.min(initial=0.0) < floor:
            raise DataError(
                f"kernel not PSD: min eigenvalue {w.min():.3e} below {floor:.3e}"
            )
        if entries.shape[0] <= _RECONSTRUCTION_CHECK_MAX_DIM:
            recon = np.linalg.norm((v * w) @ v.T - entries)
            if norm > 0 and recon > RECONSTRUCTION_RTOL * norm:
                raise DataError(
                    f"eigendecomposition inconsistent: rel error {recon / norm:.3e}"
                )
        self.entries = entries
        self.eigenvalues = w
        self.eigenvectors = v
        self.clipped_mass = float(clipped_mass)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    def sqrt(self) -> np.ndarray:
        """Symmetric PSD square root V sqrt(w)+ V^T."""
        w = np.clip(self.eigenvalues, 0.0, None)
        return (self.eigenvectors * np.sqrt(w)) @ self.eigenvectors.T

    def pinv_dot(self, x: np.ndarray) -> np.ndarray:
        """Apply the pseudo-inverse on the numerical range.

        Eigenvalues below PINV_RTOL * lambda_max are treated as zero.
        """
        w = self.eigenvalues
        keep = w > PINV_RTOL * max(self.lambda_max, 0.0)
        if not np.any(keep):
            return np.zeros_like(np.asarray(x, dtype=float))
        vk = self.eigenvectors[:, keep]
        proj = vk.T @ x
        scale = w[keep] if proj.ndim == 1 else w[keep][:, None]
        return vk @ (proj / scale)

    def scaled(self, alpha: float) -> "KernelMatrix":
        """Kernel scaled by a positive factor (eigenvectors unchanged)."""
        if alpha <= 0:
            raise DataError("scale factor must be positive")
        return KernelMatrix(
            self.entries * alpha,
            eigen=(self.eigenvalues * alpha, self.eigenvectors),
            clipped_mass=self.clipped_mass * alpha,
        )


@dataclass
class DftKernelSpec:
    """Circulant kernel spec: a DFT basis with decreasing diagonal weights."""

    dim: int
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.dim < 1:
            raise DataError("kernel dimension must be positive")
        if self.weights.shape != (self.dim,):
            raise DataError(
                f"expected {self.dim} weights, got shape {self.weights.shape}"
            )
        if self.weights[-1] <= 0 or np.any(np.diff(self.weights) >= 0):
            raise DataError("weights must be strictly decreasing and positive")


def harmonic_weights(dim: int) -> np.ndarray:
    """Default weight profile N/(i+1): well conditioned, smooth decay."""
    return dim / np.arange(1, dim + 1, dtype=float)


def linear_weights(dim: int) -> np.ndarray:
    """Linearly decaying profile from 2 towards 1."""
    return 2.0 - np.arange(dim, dtype=float) / dim


def exponential_weights(dim: int, rate: float = 0.5) -> np.ndarray:
    """Geometric decay dim * rate**i."""
    if not 0.0 < rate < 1.0:
        raise DataError("decay rate must be in (0, 1)")
    return float(dim) * rate ** np.arange(dim, dtype=float)


WEIGHT_PROFILES = {
    "harmonic": harmonic_weights,
    "linear": linear_weights,
    "exponential": exponential_weights,
}


def dft_circulant(spec: DftKernelSpec) -> np.ndarray:
    """Elementwise modulus of the real symmetric circulant, before repair.

    Entry (i, j) depends only on (i - j) mod N; the diagonal is constant
    and equals mean(weights).
    """
    col = np.fft.ifft(spec.weights).real
    return np.abs(circulant(col))


def build_dft_kernel(spec: DftKernelSpec) -> KernelMatrix:
    """DFT-basis kernel: abs of the weighted circulant, PSD-repaired."""
    return psd_repair(dft_circulant(spec))


def psd_repair(entries) -> KernelMatrix:
    """Clip negative eigenvalues at zero, recording the clipped mass."""
    entries = np.asarray(entries, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise DataError(f"expected a square matrix, got shape {entries.shape}")
    norm = np.linalg.norm(entries)
    asym = np.linalg.norm(entries - entries.T)
    if norm > 0 and asym > 1e-10 * norm:
        raise DataError(f"matrix not symmetric: rel asymmetry {asym / norm:.3e}")
    sym = 0.5 * (entries + entries.T)
    w, v = np.linalg.eigh(sym)
    clipped = float(-w[w < 0].sum())
    w = np.clip(w, 0.0, None)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    repaired = (v * w) @ v.T
    repaired = 0.5 * (repaired + repaired.T)
    return KernelMatrix(repaired, eigen=(w, v), clipped_mass=clipped)


def kronecker_kernel(
    kh: KernelMatrix, kw: KernelMatrix, max_dim: int = DEFAULT_MAX_KRON_DIM
) -> KernelMatrix:
    """Dense Kronecker product kh (x) kw.

    The eigendecomposition is assembled from the factor decompositions
    (pairwise eigenvalue products), not recomputed.
    """
    dim = kh.dim * kw.dim
    if dim > max_dim:
        raise DataError(
            f"Kronecker dimension {dim} exceeds limit {max_dim}; "
            "use KroneckerKernel to keep the product implicit"
        )
    w = np.kron(kh.eigenvalues, kw.eigenvalues)
    order = np.argsort(w)[::-1]
    v = np.kron(kh.eigenvectors, kw.eigenvectors)[:, order]
    return KernelMatrix(np.kron(kh.entries, kw.entries), eigen=(w[order], v))


@dataclass
class KroneckerKernel:
    """Implicit Kronecker product kh (x) kw over a rows x cols grid.

    Indexing follows column-major vectorization: grid entry (i, j) maps to
    vector position j * n_rows + i, so the (a, b) kernel entry for pairs
    a=(i, j), b=(i', j') is kw[i, i'] * kh[j, j'].
    """

    kh: KernelMatrix
    kw: KernelMatrix

    @property
    def dim(self) -> int:
        return self.kh.dim * self.kw.dim

    @property
    def trace(self) -> float:
        return self.kh.trace * self.kw.trace

    @property
    def lambda_max(self) -> float:
        return self.kh.lambda_max * self.kw.lambda_max

    def block(self, rows_i, rows_j, cols_i, cols_j) -> np.ndarray:
        """Sub-block at grid-pair rows x grid-pair columns."""
        return self.kw.entries[np.ix_(rows_i, cols_i)] * self.kh.entries[
            np.ix_(rows_j, cols_j)
        ]

    def apply_grid(self, sigma: np.ndarray) -> np.ndarray:
        """unvec(K vec(sigma)) without materializing the product."""
        return self.kw.entries @ sigma @ self.kh.entries

    def dense(self, max_dim: int = DEFAULT_MAX_KRON_DIM) -> KernelMatrix:
        return kronecker_kernel(self.kh, self.kw, max_dim=max_dim)


def kf_dim(kf) -> int:
    return kf.dim


def kf_trace(kf) -> float:
    return kf.trace


def vec_positions(i_idx, j_idx, n_grid_rows: int) -> np.ndarray:
    """Column-major vector positions j * n_rows + i for pair index arrays."""
    return np.asarray(j_idx) * n_grid_rows + np.asarray(i_idx)


def kf_block(kf, rows_i, rows_j, cols_i, cols_j, n_grid_rows: int) -> np.ndarray:
    """Grid-kernel sub-block for (i, j) pair lists; dispatches on kernel form."""
    if isinstance(kf, KroneckerKernel):
        return kf.block(rows_i, rows_j, cols_i, cols_j)
    rows = vec_positions(rows_i, rows_j, n_grid_rows)
    cols = vec_positions(cols_i, cols_j, n_grid_rows)
    return kf.entries[np.ix_(rows, cols)]


def kf_apply_grid(kf, sigma: np.ndarray) -> np.ndarray:
    """unvec(K vec(sigma)) for either kernel form."""
    if isinstance(kf, KroneckerKernel):
        return kf.apply_grid(sigma)
    n, l = sigma.shape
    return (kf.entries @ sigma.ravel(order="F")).reshape((n, l), order="F")


@dataclass
class FeatureFactorization:
    """Thin factor phi with phi phi^T reconstructing a source kernel."""

    rows: int
    cols: int
    factor: np.ndarray

    def row_norms_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.factor, self.factor)


def factorize(k: KernelMatrix) -> FeatureFactorization:
    """Eigen factorization phi = V_r sqrt(w_r) over the numerical rank.

    Eigenvalues below RANK_RTOL * lambda_max are dropped, so rank-deficient
    kernels produce thin factors.
    """
    w = k.eigenvalues
    keep = w > RANK_RTOL * max(k.lambda_max, 0.0)
    phi = k.eigenvectors[:, keep] * np.sqrt(w[keep])
    return FeatureFactorization(rows=k.dim, cols=int(keep.sum()), factor=phi)
