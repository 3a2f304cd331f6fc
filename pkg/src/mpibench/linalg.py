"""Dense matrix helpers: SVD factorizations and proximal primitives.

Matrices are plain float64 numpy arrays in row-major layout.  The exact SVD
wraps LAPACK; the randomized SVD implements a seeded Gaussian range finder
with orthonormalized power iterations, so it is reproducible bit for bit
for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class SvdFactors:
    """Thin SVD, singular values in nonincreasing order.

    U is (M, K), s is (K,), V is (N, K) so that A ~ U @ diag(s) @ V.T.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.s) @ self.V.T

    @property
    def rank(self) -> int:
        return self.s.shape[0]


def matvec(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product with an explicit shape check."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if A.ndim != 2 or x.ndim != 1 or A.shape[1] != x.shape[0]:
        raise ValueError(f"incompatible shapes for matvec: {A.shape} and {x.shape}")
    return A @ x


def exact_svd(A: np.ndarray) -> SvdFactors:
    """Full-accuracy thin SVD of a dense matrix.

    Backed by LAPACK bidiagonalization.  Raises on non-convergence with the
    matrix shape in the message.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2D matrix, got shape {A.shape}")
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as err:
        raise RuntimeError(f"SVD did not converge for shape {A.shape}: {err}") from err
    return SvdFactors(U, s, Vt.T)


def _orthonormalize(M: np.ndarray) -> np.ndarray:
    """QR-based orthonormal basis with a deterministic sign convention."""
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def rsvd(
    A: np.ndarray,
    rank: int,
    oversample: int = 10,
    power_iters: int = 2,
    seed: int = 0,
) -> SvdFactors:
    """Randomized truncated SVD (Gaussian sketch plus power iterations).

    The sketch width is rank + oversample (capped at the matrix dimensions)
    and every power iteration re-orthonormalizes via QR to keep the basis
    well conditioned.  Deterministic for a fixed seed.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2D matrix, got shape {A.shape}")
    m, n = A.shape
    if not 1 <= rank <= min(m, n):
        raise ValueError(f"rank must be in [1, {min(m, n)}] for shape {A.shape}, got {rank}")
    if oversample < 0 or power_iters < 0:
        raise ValueError("oversample and power_iters must be nonnegative")

    rng = np.random.default_rng(seed)
    width = min(rank + oversample, n)
    omega = rng.standard_normal((n, width))
    Q = _orthonormalize(A @ omega)
    for _ in range(power_iters):
        Z = _orthonormalize(A.T @ Q)
        Q = _orthonormalize(A @ Z)
    B = Q.T @ A
    Ub, s, Vt = np.linalg.svd(B, full_matrices=False)
    return SvdFactors(Q @ Ub[:, :rank], s[:rank], Vt[:rank].T)


def soft_shrink(x: np.ndarray, threshold: float) -> np.ndarray:
    """Soft-thresholding: sign(x) * max(|x| - threshold, 0)."""
    if threshold < 0:
        raise ValueError(f"shrinkage threshold must be nonnegative, got {threshold}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


def project_nonneg(x: np.ndarray) -> np.ndarray:
    """Projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def matrix_with_spectrum(
    singular_values: np.ndarray, rows: int, cols: int, seed: int = 0
) -> np.ndarray:
    """Dense matrix with prescribed singular values and seeded random factors.

    Left and right factors are orthonormalized Gaussian draws, so the
    returned matrix has exactly the given spectrum (up to rounding).
    """
    s = np.asarray(singular_values, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] > min(rows, cols):
        raise ValueError(
            f"need at most min(rows, cols)={min(rows, cols)} singular values, "
            f"got shape {s.shape}"
        )
    if np.any(s < 0):
        raise ValueError("singular values must be nonnegative")
    rng = np.random.default_rng(seed)
    U = _orthonormalize(rng.standard_normal((rows, s.shape[0])))
    V = _orthonormalize(rng.standard_normal((cols, s.shape[0])))
    return (U * s) @ V.T
