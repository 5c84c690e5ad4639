"""Dense factorizations backing the PLR decomposition and the model fits.

Matrices are plain ``numpy`` float arrays validated by :func:`as_matrix`. Every
routine is deterministic: LAPACK partial pivoting picks the first row holding
the largest pivot, and sign conventions are fixed after the fact.
"""

import logging

import numpy as np
import scipy.linalg
import scipy.optimize

from orthofit.core.errors import (
    InputError,
    NotSymmetricError,
    SingularMatrixError,
)
from orthofit.core.models import Matrix, Permutation, UnitLowerTriangular, Vector

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
SYM_TOL = 1e-9


def as_matrix(values, *, square: bool = False) -> Matrix:
    matrix = np.array(values, dtype=float)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2 or matrix.size == 0:
        raise InputError(f"Expected a non-empty matrix, got shape {matrix.shape}.")
    if not np.all(np.isfinite(matrix)):
        raise InputError("Matrix entries must be finite.")
    if square and matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"Expected a square matrix, got shape {matrix.shape}.")
    return matrix


def _scale(a: Matrix) -> float:
    return float(np.max(np.linalg.norm(a, axis=0))) or 1.0


def householder_qr(a: Matrix) -> tuple[Matrix, Matrix]:
    """Householder QR with the signs fixed so that diag(R) is non-negative."""

    q, r = np.linalg.qr(a)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, signs[:, None] * r


def qr_decompose(a) -> tuple[Matrix, Matrix]:
    """Return the unique (Q, R) with A = QR, Q'Q = I and diag(R) > 0."""

    a = as_matrix(a, square=True)
    q, r = householder_qr(a)
    threshold = PIVOT_TOL * _scale(a)
    if np.any(np.abs(np.diag(r)) < threshold):
        raise SingularMatrixError(
            f"Matrix is singular at working precision (min |R_hh| = {np.min(np.abs(np.diag(r))):.3e})."
        )
    return q, r


def plu_decompose(a) -> tuple[Permutation, UnitLowerTriangular, Matrix]:
    """Partial-pivoting factorization A = P L U."""

    a = as_matrix(a, square=True)
    p, lower, upper = scipy.linalg.lu(a, check_finite=False)
    pivots = np.abs(np.diag(upper))
    if np.any(pivots < PIVOT_TOL * _scale(a)):
        raise SingularMatrixError(
            f"Matrix is singular at working precision (min pivot {np.min(pivots):.3e})."
        )
    return Permutation.from_matrix(p), UnitLowerTriangular.from_matrix(lower), upper


def check_symmetric(s: Matrix) -> None:
    asymmetry = float(np.linalg.norm(s - s.T))
    scale = float(np.linalg.norm(s)) or 1.0
    if asymmetry > SYM_TOL * scale:
        raise NotSymmetricError(f"Matrix is not symmetric (||S - S'|| = {asymmetry:.3e}).")


def symmetric_eigen(s) -> tuple[Vector, Matrix]:
    """Eigenvalues in descending order and orthonormal eigenvectors as columns.

    Each eigenvector is signed so that its largest-magnitude entry is positive.
    """

    s = as_matrix(s, square=True)
    check_symmetric(s)
    values, vectors = np.linalg.eigh(0.5 * (s + s.T))
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    lead = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    vectors *= np.where(lead < 0, -1.0, 1.0)
    return values, vectors


def solve_upper_triangular(r, b) -> Matrix:
    r = as_matrix(r, square=True)
    b = np.asarray(b, dtype=float)
    diagonal = np.abs(np.diag(r))
    if np.any(diagonal < PIVOT_TOL):
        raise SingularMatrixError(
            f"Upper triangular matrix is singular (min |R_hh| = {np.min(diagonal):.3e})."
        )
    return scipy.linalg.solve_triangular(r, b, lower=False, check_finite=False)


def align_columns(reference, q) -> Matrix:
    """Reorder and re-sign the columns of ``q`` to best match ``reference``."""

    reference = as_matrix(reference, square=True)
    q = as_matrix(q, square=True)
    overlap = reference.T @ q
    rows, cols = scipy.optimize.linear_sum_assignment(-np.abs(overlap))
    aligned = np.empty_like(q)
    for h, col in zip(rows, cols, strict=True):
        aligned[:, h] = q[:, col] * (1.0 if overlap[h, col] >= 0 else -1.0)
    return aligned


def column_discrepancy(reference, q) -> float:
    """Largest entrywise difference after aligning columns up to sign and order."""

    reference = as_matrix(reference, square=True)
    return float(np.max(np.abs(reference - align_columns(reference, q))))
