"""PCA filter banks learned from training patches (the PCANet comparison)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ShapeError
from .kernels import KernelBank, MomentFamily
from .pipeline import _grid, _patch_matrix, project_map

__all__ = [
    "PatchCovariance",
    "jacobi_eigh",
    "patch_covariance",
    "learn_pca_filters",
    "learn_pca_banks",
]


@dataclass
class PatchCovariance:
    matrix: np.ndarray
    sample_count: int

    def __add__(self, other):
        return PatchCovariance(self.matrix + other.matrix, self.sample_count + other.sample_count)

    @property
    def normalized(self):
        return self.matrix / max(self.sample_count, 1)


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues, eigenvectors) with eigenvalues in descending order
    and eigenvectors as columns. Sweeps stop once the off-diagonal Frobenius
    norm falls below ``tol`` times the matrix norm.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ShapeError(f"jacobi_eigh needs a square matrix, got {A.shape}")
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max())):
        raise ShapeError("jacobi_eigh needs a symmetric matrix")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


def patch_covariance(patches):
    """Second-moment matrix of flattened patches (they are not re-centered)."""
    X = np.asarray(patches, dtype=float)
    X = X.reshape(len(X), -1)
    return PatchCovariance(X.T @ X, len(X))


def _image_covariance(grids, k1, k2):
    total = None
    for g in grids:
        P = _patch_matrix(_grid(g), k1, k2)
        part = PatchCovariance(P.T @ P, len(P))
        total = part if total is None else total + part
    return total


def _fix_signs(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _bank_from_covariance(cov, k1, k2, L, rank_tol=1e-10):
    if cov.sample_count < k1 * k2:
        raise CapacityError(f"need at least {k1 * k2} patches, got {cov.sample_count}")
    if not 1 <= L <= k1 * k2:
        raise CapacityError(f"L={L} must lie in [1, {k1 * k2}]")
    values, vectors = jacobi_eigh(cov.normalized)
    rank = int(np.sum(values > rank_tol * max(values[0], 1e-300)))
    if rank < L:
        raise CapacityError(f"patch covariance has rank {rank}, fewer than the {L} filters requested")
    vectors = _fix_signs(vectors[:, :L])
    filters = vectors.T.reshape(L, k1, k2)
    orders = tuple((j, 0) for j in range(L))
    return KernelBank(MomentFamily("PCA"), k1, k2, filters, orders, cell_area=1.0, eigenvalues=values)


def learn_pca_filters(patches, L):
    """Top-``L`` eigenvectors of the patch second-moment matrix as a bank.

    ``patches`` is a stack of k1 x k2 grids, used as given. Mean-centered
    patches are all orthogonal to the constant grid, so their covariance has
    rank at most k1 k2 - 1. Each eigenvector's largest-magnitude entry is
    made positive. The bank keeps the full descending eigenvalue list.
    """
    patches = np.asarray(patches, dtype=float)
    if patches.ndim != 3:
        raise ShapeError(f"patches must have shape (count, k1, k2), got {patches.shape}")
    _, k1, k2 = patches.shape
    return _bank_from_covariance(patch_covariance(patches), k1, k2, L)


def learn_pca_banks(images, config):
    """Cascaded banks: stage 1 from image patches, stage 2 from stage-1 map patches."""
    grids = [_grid(im) for im in images]
    k1, k2 = config.k1, config.k2
    first = _bank_from_covariance(_image_covariance(grids, k1, k2), k1, k2, config.l1)
    if config.stages == 1:
        return [first]
    total = None
    for g in grids:
        part = _image_covariance(project_map(g, first, config.complex_mode), k1, k2)
        total = part if total is None else total + part
    return [first, _bank_from_covariance(total, k1, k2, config.l2)]
