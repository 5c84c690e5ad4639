"""Normal and leptokurtic-normal densities, and Mardia kurtosis diagnostics."""

import logging
import math

import numpy as np
import scipy.linalg
from scipy import stats

from orthofit.core.errors import (
    BetaOutOfRangeError,
    InputError,
    NotPositiveDefiniteError,
)
from orthofit.core.linalg import as_matrix, check_symmetric
from orthofit.core.models import (
    KurtosisTest,
    LNParams,
    Matrix,
    MVNormalParams,
    Vector,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def beta_max(d: int) -> float:
    """Largest excess kurtosis keeping the density positive and unimodal."""

    return min(4.0 * d, 4.0 * d * (d + 2) / 5.0)


def check_beta(beta: float, d: int) -> None:
    upper = beta_max(d)
    if not (math.isfinite(beta) and 0.0 <= beta <= upper):
        raise BetaOutOfRangeError(f"Excess kurtosis {beta!r} outside [0, {upper:g}] for d = {d}.")


def q_factor(y, beta: float, d: int):
    check_beta(beta, d)
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InputError("q(y; beta) is defined for y >= 0 only.")
    value = 1.0 + beta / (8.0 * d * (d + 2)) * (y * y - 2.0 * (d + 2) * y + d * (d + 2))
    return float(value) if value.ndim == 0 else value


def cholesky_factor(sigma: Matrix) -> Matrix:
    sigma = np.asarray(sigma, dtype=float)
    check_symmetric(sigma)
    try:
        return scipy.linalg.cholesky(sigma, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NotPositiveDefiniteError("Covariance matrix is not positive definite.") from e


def mahalanobis_sq(x, mu: Vector, chol: Matrix):
    centered = np.atleast_2d(np.asarray(x, dtype=float)) - mu
    z = scipy.linalg.solve_triangular(chol, centered.T, lower=True, check_finite=False)
    return np.sum(z * z, axis=0)


def _log_det(chol: Matrix) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _squeeze(x, values):
    return float(values[0]) if np.ndim(x) == 1 else values


def _normal_terms(x, params: MVNormalParams):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.d:
        raise InputError(f"Observation dimension {x.shape[-1]} does not match d = {params.d}.")
    chol = params._chol
    delta = mahalanobis_sq(x, params.mu, chol)
    logpdf = -0.5 * (params.d * LOG_2PI + _log_det(chol) + delta)
    return delta, logpdf


def normal_logpdf(x, params: MVNormalParams):
    """Log density of N(mu, sigma) at one observation or at each row of ``x``."""

    _, logpdf = _normal_terms(x, params)
    return _squeeze(x, logpdf)


def ln_logpdf(x, params: LNParams):
    """Log density of the leptokurtic-normal: ln q(delta; beta) + normal log density."""

    delta, logpdf = _normal_terms(x, params)
    if params.beta == 0.0:
        return _squeeze(x, logpdf)
    with np.errstate(divide="ignore"):
        log_q = np.log(q_factor(delta, params.beta, params.d))
    return _squeeze(x, log_q + logpdf)


def sample_moments(x) -> tuple[Vector, Matrix]:
    """Sample mean and covariance with divisor n."""

    x = as_matrix(x)
    mean = x.mean(axis=0)
    centered = x - mean
    return mean, centered.T @ centered / x.shape[0]


def _mardia_b2(x: Matrix) -> float:
    n, d = x.shape
    if n <= d:
        raise NotPositiveDefiniteError(f"Need more observations than variables (n = {n}, d = {d}).")
    mean, cov = sample_moments(x)
    delta = mahalanobis_sq(x, mean, cholesky_factor(cov))
    return float(np.mean(delta * delta))


def empirical_excess_kurtosis(x) -> float:
    """Mardia's b2 minus its normal expectation d(d+2)."""

    x = as_matrix(x)
    d = x.shape[1]
    return _mardia_b2(x) - d * (d + 2)


def mardia_kurtosis_test(x, *, corrected: bool = False) -> KurtosisTest:
    """Asymptotic two-sided Mardia test of mesokurtosis.

    With ``corrected`` the small-sample expectation d(d+2)(n-1)/(n+1) is used
    in the numerator instead of d(d+2).
    """

    x = as_matrix(x)
    n, d = x.shape
    b2 = _mardia_b2(x)
    expected = d * (d + 2) * ((n - 1) / (n + 1) if corrected else 1.0)
    statistic = (b2 - expected) / math.sqrt(8.0 * d * (d + 2) / n)
    p_value = float(min(1.0, 2.0 * stats.norm.sf(abs(statistic))))
    return KurtosisTest(n=n, d=d, excess=b2 - d * (d + 2), statistic=statistic, p_value=p_value)
