from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from app.errors import NonFiniteError, ShapeError, SvdConvergenceError

Matrix = npt.NDArray[np.float64]

MAX_SWEEPS = 100
OFF_DIAGONAL_TOL = 1e-12
# Columns shorter than RANK_TOL * ||A||_F are numerically null: never rotated, left vector rebuilt.
RANK_TOL = 1e-13
# Residual still accepted when the sweep cap is reached.
SETTLED_TOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD; arrays may carry leading stack dimensions.

    u is (..., m, r), sigma is (..., r) non-increasing, vt is (..., r, n), r = min(m, n).
    """

    u: Matrix
    sigma: Matrix
    vt: Matrix

    def reconstruct(self) -> Matrix:
        return (self.u * self.sigma[..., None, :]) @ self.vt


def as_matrix(data: npt.ArrayLike) -> Matrix:
    matrix = np.array(data, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(1, -1)
    if matrix.ndim < 2 or matrix.shape[-1] == 0 or matrix.shape[-2] == 0:
        raise ShapeError(f"expected a non-empty matrix, got shape {matrix.shape}")
    return _finite(matrix, "matrix")


def _finite(matrix: Matrix, what: str) -> Matrix:
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return matrix


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return _finite(a @ b, "product")


def transpose(a: Matrix) -> Matrix:
    return np.swapaxes(a, -1, -2).copy()


def add_scaled(a: Matrix, b: Matrix, c: float) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {b.shape} to {a.shape}")
    return _finite(a + c * b, "sum")


def frobenius_norm(a: Matrix) -> float:
    return float(np.linalg.norm(a))


def trace(a: Matrix) -> float:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace requires a square matrix, got {a.shape}")
    return float(np.trace(a))


def svd(a: Matrix) -> SvdResult:
    """One-sided Jacobi SVD, vectorised over any leading stack dimensions."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2 or a.shape[-1] == 0 or a.shape[-2] == 0:
        raise ShapeError(f"svd requires a non-empty matrix, got shape {a.shape}")
    _finite(a, "svd input")
    rows, cols = a.shape[-2:]
    stack = a.shape[:-2]
    flipped = rows < cols
    work = np.swapaxes(a, -1, -2) if flipped else a
    work = work.reshape((-1,) + work.shape[-2:]).copy()
    left, sigma, right = _jacobi(work)
    if flipped:
        left, right = right, left
    left, right = _canonical_signs(left, right)
    r = sigma.shape[-1]
    return SvdResult(
        u=left.reshape(stack + (rows, r)),
        sigma=sigma.reshape(stack + (r,)),
        vt=np.swapaxes(right, -1, -2).reshape(stack + (r, cols)),
    )


def _jacobi(work: Matrix) -> tuple[Matrix, Matrix, Matrix]:
    count, _, cols = work.shape
    v = np.repeat(np.eye(cols)[None, :, :], count, axis=0)
    null_floor = (RANK_TOL * RANK_TOL) * np.einsum("kij,kij->k", work, work)
    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                up = work[:, :, p]
                uq = work[:, :, q]
                alpha = np.einsum("ij,ij->i", up, up)
                beta = np.einsum("ij,ij->i", uq, uq)
                gamma = np.einsum("ij,ij->i", up, uq)
                active = np.abs(gamma) > OFF_DIAGONAL_TOL * np.sqrt(alpha * beta)
                active &= np.minimum(alpha, beta) > null_floor
                if not active.any():
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * np.where(active, gamma, 1.0))
                t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = np.where(active, 1.0 / np.sqrt(1.0 + t * t), 1.0)[:, None]
                s = np.where(active, c[:, 0] * t, 0.0)[:, None]
                work[:, :, p], work[:, :, q] = c * up - s * uq, s * up + c * uq
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p], v[:, :, q] = c * vp - s * vq, s * vp + c * vq
        if not rotated:
            break
    else:
        residual = _off_diagonal_residual(work, null_floor)
        if residual > SETTLED_TOL:
            raise SvdConvergenceError(residual, MAX_SWEEPS)

    sigma = np.linalg.norm(work, axis=1)
    order = np.argsort(-sigma, axis=-1, kind="stable")
    sigma = np.take_along_axis(sigma, order, axis=-1)
    work = np.take_along_axis(work, order[:, None, :], axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)

    left = np.zeros_like(work)
    for index in range(count):
        cutoff = max(float(np.sqrt(null_floor[index])), np.finfo(np.float64).tiny)
        keep = sigma[index] > cutoff
        left[index][:, keep] = work[index][:, keep] / sigma[index, keep]
        if not keep.all():
            left[index] = _complete_basis(left[index], keep)
    return left, sigma, v


def _complete_basis(columns: Matrix, keep: npt.NDArray[np.bool_]) -> Matrix:
    completed = columns.copy()
    basis = list(completed[:, keep].T)
    for j in np.flatnonzero(~keep):
        q = np.array(basis).T if basis else np.zeros((completed.shape[0], 0))
        residual = np.eye(completed.shape[0]) - q @ q.T
        residual = residual - q @ (q.T @ residual)
        pick = residual[:, int(np.argmax(np.linalg.norm(residual, axis=0)))]
        vector = pick / np.linalg.norm(pick)
        completed[:, j] = vector
        basis.append(vector)
    return completed


def _canonical_signs(left: Matrix, right: Matrix) -> tuple[Matrix, Matrix]:
    significant = np.abs(left) > 1e-12
    first = np.argmax(significant, axis=1)
    lead = np.take_along_axis(left, first[:, None, :], axis=1)[:, 0, :]
    flip = np.where(lead < 0.0, -1.0, 1.0)[:, None, :]
    return left * flip, right * flip


def _off_diagonal_residual(work: Matrix, null_floor: Matrix) -> float:
    gram = np.swapaxes(work, -1, -2) @ work
    squared = np.einsum("kii->ki", gram)
    diagonal = np.where(squared > null_floor[:, None], np.sqrt(squared), 0.0)
    scale = diagonal[:, :, None] * diagonal[:, None, :]
    off = np.where(scale > 0.0, np.abs(gram) / np.where(scale > 0.0, scale, 1.0), 0.0)
    off[:, np.arange(gram.shape[1]), np.arange(gram.shape[1])] = 0.0
    return float(off.max()) if off.size else 0.0
