"""Normal-theory CPC first-order conditions and the Flury-Gautschi rotation algorithm.

For the normal CPC likelihood with eigenvalues profiled out
(lambda_jh = q_h' S_j q_h), the derivative along a rotation of columns h and l is

    q_h' [ sum_j n_j (lambda_jh - lambda_jl) / (lambda_jh lambda_jl) S_j ] q_l

and a maximizer makes every such term vanish. The algorithm below sweeps over
column pairs and solves each two-dimensional problem by a fixed-point iteration
on the rotation angle.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from orthofit.core.errors import DegenerateGroupError, NoConvergenceError
from orthofit.core.linalg import symmetric_eigen
from orthofit.core.models import GroupStats, Matrix, OrthogonalMatrix

logger = logging.getLogger(__name__)

ANGLE_TOL = 1e-10
INNER_TOL = 1e-12
INNER_MAX_STEPS = 50
MAX_SWEEPS = 500


@dataclass(frozen=True, eq=False)
class FGResult:
    q: OrthogonalMatrix
    lam: Matrix
    sweeps: int
    residual: float


def _values(q) -> Matrix:
    return q.values if isinstance(q, OrthogonalMatrix) else np.asarray(q, dtype=float)


def profile_eigenvalues(q, stats: Sequence[GroupStats]) -> Matrix:
    q = _values(q)
    return np.array([np.einsum("ih,ij,jh->h", q, s.scatter, q) for s in stats])


def fg_stationarity_residual(q, stats: Sequence[GroupStats]) -> float:
    """Largest violation of the normal CPC score equations over column pairs."""

    q = _values(q)
    lam = profile_eigenvalues(q, stats)
    if np.any(lam <= 0):
        raise DegenerateGroupError("A profiled eigenvalue is not positive.")
    residual = np.zeros((q.shape[1], q.shape[1]))
    for s, lam_j in zip(stats, lam, strict=True):
        rotated = q.T @ s.scatter @ q
        # (lambda_h - lambda_l) / (lambda_h lambda_l) = 1/lambda_l - 1/lambda_h
        weights = (1.0 / lam_j)[None, :] - (1.0 / lam_j)[:, None]
        residual += s.n * weights * rotated
    upper = np.abs(residual[np.triu_indices(q.shape[1], k=1)])
    return float(upper.max()) if upper.size else 0.0


def _wrap(theta: float) -> float:
    if theta > math.pi / 4:
        return theta - math.pi / 2
    if theta < -math.pi / 4:
        return theta + math.pi / 2
    return theta


def _pair_angle(blocks: list[Matrix], sizes: list[int]) -> float:
    theta = 0.0
    for _ in range(INNER_MAX_STEPS):
        c, s = math.cos(theta), math.sin(theta)
        j1 = np.array([c, s])
        j2 = np.array([-s, c])
        weighted = np.zeros((2, 2))
        for block, n in zip(blocks, sizes, strict=True):
            delta1 = j1 @ block @ j1
            delta2 = j2 @ block @ j2
            weighted += n * (delta1 - delta2) / (delta1 * delta2) * block
        updated = _wrap(0.5 * math.atan2(2.0 * weighted[0, 1], weighted[0, 0] - weighted[1, 1]))
        if abs(updated - theta) < INNER_TOL:
            return updated
        theta = updated
    return theta


def fg_algorithm(
    stats: Sequence[GroupStats],
    tol: float = 1e-8,
    max_sweeps: int = MAX_SWEEPS,
    q0=None,
) -> FGResult:
    """Estimate the common eigenvector matrix by cyclic pairwise rotations.

    Starts from the eigenvectors of the pooled scatter matrix unless ``q0`` is
    given. Raises ``NoConvergenceError`` if the rotation angles or the
    stationarity residual have not settled after ``max_sweeps`` sweeps.
    """

    sizes = [s.n for s in stats]
    if q0 is None:
        pooled = sum(s.n * s.scatter for s in stats) / sum(sizes)
        _, q = symmetric_eigen(pooled)
    else:
        q = np.array(_values(q0), dtype=float)
    d = q.shape[1]

    for sweep in range(1, max_sweeps + 1):
        largest = 0.0
        for h in range(d - 1):
            for col in range(h + 1, d):
                pair = q[:, [h, col]]
                blocks = [pair.T @ s.scatter @ pair for s in stats]
                theta = _pair_angle(blocks, sizes)
                if theta != 0.0:
                    c, s = math.cos(theta), math.sin(theta)
                    q[:, h], q[:, col] = c * pair[:, 0] + s * pair[:, 1], -s * pair[:, 0] + c * pair[:, 1]
                largest = max(largest, abs(theta))
        if largest < ANGLE_TOL:
            residual = fg_stationarity_residual(q, stats)
            if residual <= tol:
                logger.debug("FG converged after %d sweeps (residual %.3e).", sweep, residual)
                return FGResult(OrthogonalMatrix(q), profile_eigenvalues(q, stats), sweep, residual)
    raise NoConvergenceError(f"FG algorithm did not converge within {max_sweeps} sweeps.")
