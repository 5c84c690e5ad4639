"""PLR decomposition: orthogonal Q = P L R^{-1} with R the QR factor of P L.

The d(d-1)/2 entries of L below the diagonal are unconstrained reals, so any
objective over orthogonal matrices becomes an unconstrained objective over a
flat vector once the permutation (and column signs) are frozen.
"""

import logging

import numpy as np

from orthofit.core.errors import LengthMismatchError, LinAlgError
from orthofit.core.linalg import householder_qr, plu_decompose
from orthofit.core.models import (
    OrthogonalMatrix,
    PLRFactors,
    PLRFrame,
    UnitLowerTriangular,
    Vector,
)

logger = logging.getLogger(__name__)


def n_free(d: int) -> int:
    return d * (d - 1) // 2


def plr_decompose(q: OrthogonalMatrix) -> PLRFactors:
    """Factor an orthogonal matrix into its permutation, L, and column signs.

    P and L come from the partial-pivoting PLU factorization of Q. Since
    Q = P L U and U = R^{-1} up to column signs, the signs of diag(U) are kept
    so that composing the factors reproduces Q exactly.
    """

    if not isinstance(q, OrthogonalMatrix):
        q = OrthogonalMatrix(q)
    permutation, lower, upper = plu_decompose(q.values)
    signs = tuple(-1 if u < 0 else 1 for u in np.diag(upper))
    return PLRFactors(permutation, lower, signs)


def plr_compose(factors: PLRFactors) -> OrthogonalMatrix:
    a = factors.permutation.matrix() @ factors.lower.matrix()
    q, _ = householder_qr(a)
    return OrthogonalMatrix(q * np.asarray(factors.signs, dtype=float))


def pack(lower: UnitLowerTriangular) -> Vector:
    return np.array(lower.sub_diagonal, dtype=float)


def unpack(v, d: int) -> UnitLowerTriangular:
    v = np.asarray(v, dtype=float).ravel()
    if v.size != n_free(d):
        raise LengthMismatchError(
            f"Expected {n_free(d)} free entries for order {d}, got {v.size}."
        )
    return UnitLowerTriangular(d, v)


def frame_of(q: OrthogonalMatrix) -> PLRFrame:
    return plr_decompose(q).frame


def orthogonal_from_vector(v, frame: PLRFrame) -> OrthogonalMatrix:
    """Map free L entries to an orthogonal matrix under a frozen frame."""

    lower = unpack(v, frame.order)
    return plr_compose(PLRFactors(frame.permutation, lower, frame.signs))


def vector_from_orthogonal(q: OrthogonalMatrix, frame: PLRFrame) -> Vector:
    """Back-transformation L = P'QR for a frame fixed beforehand.

    When Q has its own pivoting frame the PLU factor is used as is; otherwise
    L is solved for under the given frame, raising ``LinAlgError`` if Q is not
    representable there.
    """

    factors = plr_decompose(q)
    if factors.frame != frame:
        logger.debug(
            "Frame mismatch: %s vs %s", factors.frame.permutation.mapping, frame.permutation.mapping
        )
        return _project_onto_frame(q, frame)
    return pack(factors.lower)


def _project_onto_frame(q: OrthogonalMatrix, frame: PLRFrame) -> Vector:
    # L = P'QR solved directly: P'Q D = L U' with D the frame signs, so an
    # unpivoted LU of P'QD yields L whenever its leading minors are nonzero.
    b = frame.permutation.matrix().T @ q.values * np.asarray(frame.signs, dtype=float)
    d = b.shape[0]
    lower = np.eye(d)
    upper = b.copy()
    for h in range(d - 1):
        pivot = upper[h, h]
        if abs(pivot) < 1e-12:
            raise LinAlgError("Orthogonal matrix is not representable under the frozen PLR frame.")
        factors = upper[h + 1 :, h] / pivot
        lower[h + 1 :, h] = factors
        upper[h + 1 :, :] -= np.outer(factors, upper[h, :])
    if np.any(np.diag(upper) <= 0):
        raise LinAlgError("Orthogonal matrix is not representable under the frozen PLR frame.")
    return pack(UnitLowerTriangular.from_matrix(lower))
