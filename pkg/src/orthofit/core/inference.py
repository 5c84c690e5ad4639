"""Information criteria and likelihood-ratio tests over the nested model lattice.

AIC and BIC follow the larger-is-better convention: 2*loglik minus the penalty.
"""

import logging
import math
from collections.abc import Sequence

from scipy import stats

from orthofit.core.errors import InputError, NotNestedError
from orthofit.core.models import (
    LN_CPC,
    LN_PC,
    N_CPC,
    N_PC,
    ComparisonReport,
    FitResult,
    LRTest,
    ModelEntry,
    ModelSpec,
)

logger = logging.getLogger(__name__)

NESTING_SLACK = 1e-6

# (null, alternative) pairs; LN-CPC and N-PC are not nested in each other.
NESTED_PAIRS: tuple[tuple[ModelSpec, ModelSpec], ...] = (
    (N_CPC, LN_CPC),
    (N_CPC, N_PC),
    (N_CPC, LN_PC),
    (LN_CPC, LN_PC),
    (N_PC, LN_PC),
)


def aic(loglik: float, m: int) -> float:
    return 2.0 * loglik - 2.0 * m


def bic(loglik: float, m: int, n: int) -> float:
    if n < 1:
        raise InputError("BIC needs at least one observation.")
    return 2.0 * loglik - m * math.log(n)


def chi_square_sf(x: float, df: int) -> float:
    if df < 1:
        raise InputError(f"Degrees of freedom must be positive, got {df}.")
    if x <= 0:
        return 1.0
    return float(stats.chi2.sf(x, df))


def lr_test(loglik0: float, m0: int, loglik1: float, m1: int, *, null: str = "", alternative: str = "") -> LRTest:
    """Likelihood-ratio test of a null model nested in an alternative with more parameters."""

    if m1 <= m0:
        raise NotNestedError(f"Alternative has {m1} parameters, not more than the null's {m0}.")
    statistic = 2.0 * (loglik1 - loglik0)
    if statistic < 0:
        if loglik1 < loglik0 - NESTING_SLACK:
            logger.warning(
                "Alternative %s fits worse than null %s by %.3e; statistic clamped to 0.",
                alternative or "model",
                null or "model",
                loglik0 - loglik1,
            )
        statistic = 0.0
    df = m1 - m0
    return LRTest(null, alternative, statistic, df, chi_square_sf(statistic, df))


def _best(entries: Sequence[ModelEntry], criterion: str) -> str | None:
    if not entries:
        return None
    return max(entries, key=lambda e: getattr(e, criterion)).name


def build_comparison(results: Sequence[FitResult], n: int) -> ComparisonReport:
    """Criteria for every fitted model and LR tests for every fitted nested pair."""

    entries = [
        ModelEntry(r.spec.name, r.loglik, r.m, aic(r.loglik, r.m), bic(r.loglik, r.m, n)) for r in results
    ]
    by_spec = {r.spec: r for r in results}
    tests = []
    for null, alternative in NESTED_PAIRS:
        if null in by_spec and alternative in by_spec:
            r0, r1 = by_spec[null], by_spec[alternative]
            tests.append(lr_test(r0.loglik, r0.m, r1.loglik, r1.m, null=null.name, alternative=alternative.name))
    return ComparisonReport(n, entries, tests, _best(entries, "aic"), _best(entries, "bic"))
