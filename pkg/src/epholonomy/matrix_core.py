"""Small dense complex matrices.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Most functions
accept batches (leading axes) where that is free; ``eig2`` and the
positivity test work on single 2x2 matrices.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NearDegenerate, NotHermitian

EP_THRESHOLD = 1e-8
ATOL = 1e-10
RTOL = 1e-10


def as_matrix(m) -> np.ndarray:
    """Coerce to a finite square complex matrix."""
    a = np.array(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def identity(dim: int = 2) -> np.ndarray:
    return np.eye(dim, dtype=np.complex128)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


def adjoint(m) -> np.ndarray:
    m = np.asarray(m)
    return np.conj(np.swapaxes(m, -1, -2))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    _same_shape(a, b)
    return a @ b - b @ a


def frobenius_norm(m) -> np.ndarray | float:
    m = np.asarray(m)
    return np.sqrt(np.sum(np.abs(m) ** 2, axis=(-2, -1)))


def frobenius_distance(a, b) -> np.ndarray | float:
    a = np.asarray(a)
    b = np.asarray(b)
    _same_shape(a, b)
    return frobenius_norm(a - b)


def allclose(a, b, atol: float = ATOL, rtol: float = RTOL) -> bool:
    """``||a - b||_F <= atol + rtol * ||b||_F``."""
    return bool(frobenius_distance(a, b) <= atol + rtol * frobenius_norm(b))


@dataclass(frozen=True)
class EigDecomp2:
    eigenvalues: tuple[complex, complex]
    right_eigenvectors: np.ndarray  # columns, unit Euclidean length
    condition: float

    def reconstruct(self) -> np.ndarray:
        v = self.right_eigenvectors
        return v @ np.diag(self.eigenvalues) @ np.linalg.inv(v)


def _eigvec(m: np.ndarray, lam: complex) -> np.ndarray:
    # (m - lam) v = 0; take the null vector from whichever row is larger
    a, b = m[0, 0] - lam, m[0, 1]
    c, d = m[1, 0], m[1, 1] - lam
    if abs(a) + abs(b) >= abs(c) + abs(d):
        v = np.array([b, -a]) if abs(a) + abs(b) > 0 else np.array([1.0, 0.0])
    else:
        v = np.array([-d, c])
    v = v.astype(np.complex128)
    k = int(np.argmax(np.abs(v)))
    v = v * (np.conj(v[k]) / abs(v[k])) / np.linalg.norm(v)
    v[k] = abs(v[k])  # largest component exactly real positive
    return v


def eig2(m, ep_threshold: float = EP_THRESHOLD) -> EigDecomp2:
    """Analytic eigendecomposition of a 2x2 matrix.

    Raises ``NearDegenerate`` when ``|lam1 - lam2| < ep_threshold``.
    """
    m = as_matrix(m)
    if m.shape != (2, 2):
        raise DimensionMismatch("eig2 needs a 2x2 matrix")
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    root = cmath.sqrt(tr * tr - 4 * det)
    # lam^2 - tr lam + det = 0; pick the sign that avoids cancellation
    if (tr.conjugate() * root).real < 0:
        root = -root
    q = 0.5 * (tr + root)
    gap = abs(root)
    if gap < ep_threshold:
        raise NearDegenerate(f"eigenvalue gap {gap:.3e} below threshold {ep_threshold:.1e}")
    lam1 = q
    lam2 = det / q if q != 0 else 0.5 * (tr - root)
    vecs = np.column_stack([_eigvec(m, lam1), _eigvec(m, lam2)])
    return EigDecomp2((complex(lam1), complex(lam2)), vecs, float(abs(lam1 - lam2)))


def is_hermitian(m, tol: float = 1e-10) -> bool:
    m = np.asarray(m)
    return bool(frobenius_distance(m, adjoint(m)) <= tol * max(1.0, frobenius_norm(m)))


def is_positive_definite(m, tol: float = 1e-10) -> bool:
    m = as_matrix(m)
    if not is_hermitian(m, tol):
        raise NotHermitian("positive-definiteness is only defined for Hermitian input")
    if m.shape == (2, 2):
        tr = (m[0, 0] + m[1, 1]).real
        det = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]).real
        return bool(tr > 0 and det > 0)
    return bool(np.all(np.linalg.eigvalsh(0.5 * (m + adjoint(m))) > 0))


def min_eigenvalue_2x2(m: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of (batched) Hermitian 2x2 matrices, closed form."""
    a = m[..., 0, 0].real
    d = m[..., 1, 1].real
    b = np.abs(m[..., 0, 1])
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)
